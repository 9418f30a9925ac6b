"""Command-line entry point: ``qmetro <experiment> --config FILE --out FILE``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .harness.config import EXPERIMENTS, ConfigError, default_config, load_config
from .harness.experiments import run, summarize
from .harness.output import records_csv, summary_text
from .states import InvalidStateError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("qmetro")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmetro", description=__doc__)
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", type=Path, help="config file; defaults are used when omitted")
        p.add_argument("--out", type=Path, help="CSV output path (default: stdout)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
        p.add_argument("--summary", type=Path, help="also write a 'key: value' summary here")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("QMETRO_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if args.config is None:
            cfg = default_config(args.experiment)
        else:
            cfg = load_config(args.config, args.experiment)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        out = args.out or (Path(cfg.output) if cfg.output else None)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with np.errstate(invalid="raise", divide="raise", over="raise"):
            records = run(cfg, args.threads)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvalidStateError, np.linalg.LinAlgError, FloatingPointError, OverflowError, ValueError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    text = records_csv(cfg, records)
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)
        log.info("wrote %d rows to %s", len(records), out)
    if args.summary is not None:
        args.summary.write_text(summary_text(summarize(cfg, records)))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
