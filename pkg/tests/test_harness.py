import json
from dataclasses import replace

import numpy as np
import pytest

from qmetro.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from qmetro.harness.config import (
    Axis, ConfigError, build_config, default_config, format_config, load_config, parse_text,
)
from qmetro.harness.experiments import (
    cells, noisy_state, cell_sensing, run, run_cell, run_fidelity_sweep, summarize, Cell,
)
from qmetro.harness.output import fmt, records_csv, summary_text
from qmetro.sensing import target_state
from qmetro.states import fidelity_pure

SMALL = """
experiment = fidelity-sweep
seed = 3
grid.p0 = [0.6, 0.9, 3]
grid.overlap = {"values": [0.0, 0.5]}
"""


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestGrammar:
    def test_values(self):
        got = parse_text("a = 1\n# comment\nb.c = [1, 2]\nd = bare words\n\ne = \"x\"")
        assert got == {"a": 1, "b.c": [1, 2], "d": "bare words", "e": "x"}

    @pytest.mark.parametrize("text", ["just words", "= 3", "a = 1\na = 2"])
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            parse_text(text)


class TestBuild:
    def test_defaults_per_experiment(self):
        assert default_config("fidelity-sweep").cell_count == 400
        assert default_config("ramsey").n_fields == 800
        with pytest.raises(ConfigError):
            default_config("nope")

    def test_small(self):
        cfg = build_config(parse_text(SMALL))
        assert cfg.seed == 3 and cfg.cell_count == 6
        assert cfg.grid[0] == Axis("p0", (0.6, 0.75, 0.9))

    @pytest.mark.parametrize("line", [
        "bogus = 1", "sensing.colour = 1", "noise.p0 = 1.5", "grid.p0 = [0, 1]",
        "grid.speed = [0, 1, 2]", "optimizer.step_rule = sgd", "noise.kind = thermal",
        'grid.gamma_loss = {"values": [2.0]}', "sensing.tau_s = -1",
        "noise.noise_unitary = [[[1, 0], [1, 0]], [[0, 0], [1, 0]]]",
        "noise.noise_unitary = [1, 2]", "grid.n_qubits = [1, 3, 2.5]",
    ])
    def test_rejects(self, line):
        with pytest.raises(ConfigError):
            build_config(parse_text("experiment = fidelity-sweep\n" + line))

    def test_experiment_mismatch(self):
        with pytest.raises(ConfigError):
            build_config({"experiment": "ramsey"}, "qfi-sweep")
        with pytest.raises(ConfigError):
            build_config({})

    def test_noise_unitary(self):
        text = "experiment = fidelity-sweep\nnoise.noise_unitary = " + json.dumps([[[0, 0], [1, 0]], [[1, 0], [0, 0]]])
        cfg = build_config(parse_text(text))
        assert np.allclose(cfg.noise.noise_unitary, [[0, 1], [1, 0]])

    @pytest.mark.parametrize("exp", ["fidelity-sweep", "qfi-sweep", "ramsey", "convergence", "transmission-sweep"])
    def test_format_round_trip(self, exp):
        cfg = default_config(exp)
        again = build_config(parse_text(format_config(cfg)))
        assert again == cfg

    def test_load_missing(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.cfg")


class TestCells:
    def test_order_and_seeds(self):
        cfg = build_config(parse_text(SMALL))
        cs = cells(cfg)
        assert [c.params for c in cs[:2]] == [{"p0": 0.6, "overlap": 0.0}, {"p0": 0.6, "overlap": 0.5}]
        assert len({c.seed for c in cs}) == len(cs)
        assert [c.seed for c in cs] == [c.seed for c in cells(cfg)]

    def test_sigma_ratio_scales_with_field(self):
        cfg = default_config("ramsey")
        s = cell_sensing(cfg, {"sigma_ratio": 0.3, "phi": 1.0})
        assert s.sigma == pytest.approx(0.075) and s.phase == pytest.approx(1.0)

    def test_noisy_state_overlap_axis(self):
        cfg = default_config("fidelity-sweep")
        s = cell_sensing(cfg, {})
        rho, _ = noisy_state(cfg, {"p0": 0.7, "overlap": 0.4}, s, 0)
        # fidelity = p0 + (1 - p0) * overlap for a unitary mixture
        assert fidelity_pure(target_state(s.phase, 1), rho) == pytest.approx(0.7 + 0.3 * 0.4)

    def test_mixture_needs_operator(self):
        cfg = build_config(parse_text("experiment = qfi-sweep\ngrid.n_qubits = {\"values\": [2]}"))
        with pytest.raises(ConfigError):
            run_cell(cfg, Cell(0, 0, {"n_qubits": 2}))

    def test_wrong_runner(self):
        with pytest.raises(ConfigError):
            run_fidelity_sweep(default_config("ramsey"))


class TestOutput:
    @pytest.mark.parametrize("v,s", [(None, ""), (True, "true"), (3, "3"), (0.1 + 0.2, "0.3"),
                                     (1e-20, "1e-20"), (float("nan"), "nan"), ("ok", "ok")])
    def test_fmt(self, v, s):
        assert fmt(v) == s

    def test_csv_layout(self):
        cfg = build_config(parse_text(SMALL))
        recs = run(cfg)
        text = records_csv(cfg, recs)
        lines = text.splitlines()
        assert lines[0].startswith("# qmetro ") and "seed=3" in lines[0]
        assert lines[1].split(",")[:4] == ["cell", "seed", "p0", "overlap"]
        assert len(lines) == 2 + 6
        assert all(r.status == "ok" for r in recs)

    def test_summary(self):
        cfg = build_config(parse_text(SMALL))
        text = summary_text(summarize(cfg, run(cfg)))
        assert "cells: 6\n" in text and "ok: 6\n" in text

    def test_convergence_rows(self):
        cfg = build_config(parse_text(
            'experiment = convergence\ngrid.n_qubits = {"values": [2]}\ngrid.sigma_ratio = {"values": [0.0, 0.2]}'))
        recs = run(cfg)
        assert recs[0].status == "pure-input" and recs[0]["iterations_to_target"] == 0
        assert recs[1].status == "ok" and recs[1]["iterations_to_target"] > 0
        lines = records_csv(cfg, recs).splitlines()
        assert lines[1] == "cell,seed,n_qubits,sigma_ratio,iteration,loss,fidelity_vs_oracle,iterations_to_target,status"
        assert len(lines) == 2 + 1 + len(recs[1].trace.records)


class TestCli:
    def test_success(self, tmp_path):
        cfg, out, summ = write(tmp_path, SMALL), tmp_path / "o.csv", tmp_path / "s.txt"
        assert main(["fidelity-sweep", "--config", str(cfg), "--out", str(out), "--summary", str(summ)]) == EXIT_OK
        assert out.read_text().count("\n") == 8
        assert summ.read_text().startswith("experiment: fidelity-sweep\n")

    def test_seed_override(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        main(["fidelity-sweep", "--config", str(cfg), "--out", str(tmp_path / "a.csv"), "--seed", "9"])
        assert "seed=9" in (tmp_path / "a.csv").read_text().splitlines()[0]

    def test_threads_do_not_change_output(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        for k in (1, 3):
            main(["fidelity-sweep", "--config", str(cfg), "--out", str(tmp_path / f"{k}.csv"), "--threads", str(k)])
        assert (tmp_path / "1.csv").read_bytes() == (tmp_path / "3.csv").read_bytes()

    def test_stdout(self, tmp_path, capsys):
        assert main(["fidelity-sweep", "--config", str(write(tmp_path, SMALL))]) == EXIT_OK
        assert capsys.readouterr().out.startswith("# qmetro")

    @pytest.mark.parametrize("text,extra", [
        ("experiment = ramsey", []),
        ("grid.p0 = [0.5, 1.5, 3]", []),
        (SMALL, ["--threads", "0"]),
    ])
    def test_config_errors(self, tmp_path, text, extra):
        cfg = write(tmp_path, text)
        assert main(["fidelity-sweep", "--config", str(cfg), "--out", str(tmp_path / "o.csv")] + extra) == EXIT_CONFIG

    def test_missing_config_file(self, tmp_path):
        assert main(["ramsey", "--config", str(tmp_path / "nope.cfg")]) == EXIT_CONFIG

    def test_numerical_failure(self, tmp_path):
        cfg = write(tmp_path, SMALL + "sensing.tau_s = 1e300\n")
        assert main(["fidelity-sweep", "--config", str(cfg), "--out", str(tmp_path / "o.csv")]) == EXIT_NUMERIC

    def test_log_level_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("QMETRO_LOG_LEVEL", "debug")
        assert main(["fidelity-sweep", "--config", str(write(tmp_path, SMALL)), "--out", str(tmp_path / "o.csv")]) == EXIT_OK


class TestSignLaw:
    """Below P0 = 0.5 the principal component can be the noise branch.

    For a qubit mixture p|psi><psi| + (1 - p)|phi><phi| with |<psi|phi>|^2 = c,
    purification raises the fidelity exactly when c > (1 - 2p) / (2 (1 - p)).
    """

    @pytest.mark.parametrize("p0", [0.1, 0.25, 0.4, 0.49])
    @pytest.mark.parametrize("overlap", [0.0, 0.2, 0.45, 0.6, 0.9])
    def test_threshold(self, p0, overlap):
        cfg = replace(default_config("fidelity-sweep"), grid=(Axis("p0", (p0,)), Axis("overlap", (overlap,))))
        (rec,) = run_fidelity_sweep(cfg)
        assert rec.status == "ok"
        bound = (1 - 2 * p0) / (2 * (1 - p0))
        if overlap > bound + 1e-3:
            assert rec["delta_fidelity"] > 1e-6
        elif overlap < bound - 1e-3:
            assert rec["delta_fidelity"] < -1e-6
