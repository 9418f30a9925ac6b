"""Deterministic CSV and summary writers."""
from __future__ import annotations

import csv
import io
import math

from .. import __version__
from .config import ExperimentConfig
from .experiments import COLUMNS, TRACE_COLUMNS, SweepRecord


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.12g}"
    return str(value)


def _header(cfg: ExperimentConfig) -> str:
    return f"# qmetro {__version__} experiment={cfg.experiment} seed={cfg.seed}\n"


def records_csv(cfg: ExperimentConfig, records: list[SweepRecord]) -> str:
    axes = [ax.name for ax in cfg.grid]
    buf = io.StringIO()
    buf.write(_header(cfg))
    w = csv.writer(buf, lineterminator="\n")
    if cfg.experiment == "convergence":
        w.writerow(["cell", "seed", *axes, *TRACE_COLUMNS])
        for r in records:
            lead = [r.cell.index, r.cell.seed, *(r.cell.params[a] for a in axes)]
            tail = [r.values["iterations_to_target"], r.status]
            if r.trace is None:
                w.writerow([fmt(x) for x in lead + [0, 0.0, 1.0] + tail])
                continue
            for rec in r.trace.records:
                w.writerow([fmt(x) for x in lead + [rec.iteration, rec.loss, rec.fidelity] + tail])
        return buf.getvalue()
    w.writerow(["cell", "seed", *axes, *COLUMNS])
    for r in records:
        row = [r.cell.index, r.cell.seed, *(r.cell.params[a] for a in axes)]
        row += [r.values.get(c) for c in COLUMNS]
        w.writerow([fmt(x) for x in row])
    return buf.getvalue()


def summary_text(summary: dict) -> str:
    return "".join(f"{k}: {fmt(v)}\n" for k, v in summary.items())
