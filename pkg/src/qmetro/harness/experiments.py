"""Grid sweeps: encode, add noise, purify, score."""
from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..channels import (
    amplitude_damping, depolarize_to_mixed, noise_for_overlap, unitary_mixture,
)
from ..metrics import (
    EncodingFamily, ape, db_gain, heisenberg_limit, projector_derivative, qfi, sql,
)
from ..qpca import Ansatz, OptimizationTrace, ansatz_unitary, optimize
from ..sensing import (
    SensingConfig, estimate_field, field_samples, gaussian_dephasing,
    phase_generator, readout, target_state,
)
from ..states import fidelity_pure, projector
from .config import ConfigError, ExperimentConfig

log = logging.getLogger(__name__)

COLUMNS = (
    "fidelity_before", "fidelity_after", "delta_fidelity",
    "b_estimate_before", "b_estimate_after", "ape_before", "ape_after",
    "qfi_before", "qfi_after", "qfi_difference", "hl", "sql", "db_gain",
    "iterations", "final_loss", "status",
)
TRACE_COLUMNS = ("iteration", "loss", "fidelity_vs_oracle", "iterations_to_target", "status")


@dataclass(frozen=True)
class Cell:
    index: int
    seed: int
    params: dict


@dataclass
class SweepRecord:
    cell: Cell
    values: dict
    trace: OptimizationTrace | None = None

    @property
    def status(self) -> str:
        return self.values.get("status", "")

    def __getitem__(self, key):
        if key in self.cell.params:
            return self.cell.params[key]
        return self.values.get(key)


def cells(cfg: ExperimentConfig) -> list[Cell]:
    names = [ax.name for ax in cfg.grid]
    combos = itertools.product(*(ax.values for ax in cfg.grid))
    out = []
    for i, combo in enumerate(combos):
        seed = int(np.random.SeedSequence([cfg.seed, i]).generate_state(1)[0])
        out.append(Cell(i, seed, dict(zip(names, combo))))
    return out


def cell_sensing(cfg: ExperimentConfig, params: dict) -> SensingConfig:
    s = cfg.sensing
    upd = {}
    for axis, field_name in (("n_qubits", "n"), ("tau_s", "tau"), ("bs_gauss", "bs"), ("b0_gauss", "b0")):
        if axis in params:
            upd[field_name] = params[axis]
    s = replace(s, **upd)
    if "phi" in params:
        s = s.with_phase(params["phi"])
    sigma = params.get("sigma_gauss", cfg.noise.sigma_gauss or s.sigma)
    ratio = params.get("sigma_ratio", cfg.noise.sigma_ratio)
    if ratio is not None:
        sigma = ratio * abs(s.b0 + s.bs)
    return replace(s, sigma=float(sigma))


def noisy_state(cfg: ExperimentConfig, params: dict, s: SensingConfig, seed: int):
    """Noisy post-sequence state and its phase derivative for one cell."""
    nz = cfg.noise
    n = s.n
    phi = s.phase
    gamma = float(params.get("gamma_loss", nz.gamma_loss))
    if nz.kind == "gaussian-field" and cfg.n_fields > 0:
        offsets = field_samples(s.sigma, cfg.n_fields, seed, cfg.antithetic)
        g = phase_generator(n)
        rho = np.zeros((2**n, 2**n), dtype=complex)
        for b in offsets:
            rho += projector(target_state(phi + s.scale * b, n))
        rho /= len(offsets)
        drho = -1j * (g @ rho - rho @ g)
        channels = (amplitude_damping(gamma, n),) if gamma > 0 else ()
        for ch in channels:
            rho, drho = ch(rho), ch(drho)
        return rho, drho
    if nz.kind == "gaussian-field":
        channels = [gaussian_dephasing(s)]
    elif nz.kind == "depolarize":
        channels = [depolarize_to_mixed(float(params.get("p0", nz.p0)), n)]
    elif nz.kind == "unitary-mixture":
        p0 = float(params.get("p0", nz.p0))
        overlap = params.get("overlap", nz.overlap)
        if overlap is not None:
            n_op = noise_for_overlap(target_state(phi, n), float(overlap))
        elif nz.noise_unitary is not None:
            n_op = nz.noise_unitary
            if n_op.shape != (2**n, 2**n):
                raise ConfigError(f"noise_unitary has shape {n_op.shape}, need {(2**n, 2**n)}")
        else:
            raise ConfigError("unitary-mixture noise needs noise.overlap, a grid overlap axis or noise.noise_unitary")
        channels = [unitary_mixture(p0, n_op)]
    else:
        channels = []
    if gamma > 0:
        channels.append(amplitude_damping(gamma, n))
    fam = EncodingFamily(n, tuple(channels))
    return fam.rho(phi), fam.drho(phi)


def purify(rho, a: Ansatz, cfg: ExperimentConfig, seed: int = 0):
    """Run the optimiser; return the trace and the ordered variational eigenbasis."""
    trace = optimize(rho, a, replace(cfg.optimizer, restart_seed=seed))
    u = ansatz_unitary(a, trace.theta)
    diag = np.real(np.diag(u @ rho @ u.conj().T))
    order = np.argsort(-diag, kind="stable")
    return trace, u.conj().T[:, order]


def ansatz_for(cfg: ExperimentConfig, n: int) -> Ansatz:
    return Ansatz(n, cfg.layers)


def run_cell(cfg: ExperimentConfig, cell: Cell) -> SweepRecord:
    s = cell_sensing(cfg, cell.params)
    rho, drho = noisy_state(cfg, cell.params, s, cell.seed)
    psi_t = target_state(s.phase, s.n)
    rng = np.random.default_rng(cell.seed)
    scale2 = s.scale**2
    v = {
        "fidelity_before": fidelity_pure(psi_t, rho),
        "qfi_before": scale2 * qfi(rho, drho).value,
        "hl": heisenberg_limit(s.n, s),
        "sql": sql(s.n, s),
    }
    v["b_estimate_before"] = estimate_field(readout(rho, cfg.shots, rng).p1, s)
    trace, basis = purify(rho, ansatz_for(cfg, s.n), cfg, cell.seed)
    v["iterations"] = trace.iterations
    v["final_loss"] = trace.final.loss
    if trace.final.loss >= cfg.threshold:
        v["status"] = "not-converged"
        _add_ape(v, s)
        return SweepRecord(cell, v, trace)
    top = basis[:, 0]
    rho_nr = np.outer(top, top.conj())
    v["fidelity_after"] = fidelity_pure(psi_t, rho_nr)
    v["delta_fidelity"] = v["fidelity_after"] - v["fidelity_before"]
    v["b_estimate_after"] = estimate_field(readout(rho_nr, cfg.shots, rng).p1, s)
    try:
        dp = projector_derivative(rho, drho, basis)
        v["qfi_after"] = scale2 * qfi(rho_nr, dp).value
        v["qfi_difference"] = v["qfi_after"] - v["qfi_before"]
        if v["qfi_after"] > 0 and v["qfi_before"] > 0:
            v["db_gain"] = db_gain(v["qfi_after"], v["qfi_before"])
        v["status"] = "ok"
    except ValueError:
        v["status"] = "degenerate"
    _add_ape(v, s)
    return SweepRecord(cell, v, trace)


def _add_ape(v: dict, s: SensingConfig) -> None:
    for tag in ("before", "after"):
        est = v.get(f"b_estimate_{tag}")
        if est is None:
            continue
        try:
            v[f"ape_{tag}"] = ape(s.bs, est)
        except ZeroDivisionError:
            pass


def convergence_cell(cfg: ExperimentConfig, cell: Cell) -> SweepRecord:
    s = cell_sensing(cfg, cell.params)
    rho, _ = noisy_state(cfg, cell.params, s, cell.seed)
    if np.linalg.matrix_rank(rho, tol=1e-12, hermitian=True) <= 1:
        # nothing to purify: the input already is its own principal component
        v = {"iterations_to_target": 0, "status": "pure-input"}
        return SweepRecord(cell, v, None)
    trace = optimize(rho, ansatz_for(cfg, s.n), replace(cfg.optimizer, restart_seed=cell.seed))
    hit = trace.iterations_to(cfg.fidelity_target)
    v = {
        "iterations_to_target": hit,
        "status": "ok" if hit is not None else "target-not-reached",
    }
    return SweepRecord(cell, v, trace)


_RUNNERS = {
    "fidelity-sweep": run_cell,
    "qfi-sweep": run_cell,
    "ramsey": run_cell,
    "transmission-sweep": run_cell,
    "convergence": convergence_cell,
}


def run(cfg: ExperimentConfig, threads: int = 1) -> list[SweepRecord]:
    """Evaluate every grid cell; records come back in cell order regardless of ``threads``."""
    fn = _RUNNERS[cfg.experiment]
    todo = cells(cfg)
    log.info("%s: %d cells on %d thread(s)", cfg.experiment, len(todo), threads)
    if threads <= 1:
        return [fn(cfg, c) for c in todo]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda c: fn(cfg, c), todo))


def run_fidelity_sweep(cfg: ExperimentConfig, threads: int = 1) -> list[SweepRecord]:
    return run(_checked(cfg, "fidelity-sweep"), threads)


def run_qfi_sweep(cfg: ExperimentConfig, threads: int = 1) -> list[SweepRecord]:
    return run(_checked(cfg, "qfi-sweep"), threads)


def run_ramsey(cfg: ExperimentConfig, threads: int = 1) -> list[SweepRecord]:
    return run(_checked(cfg, "ramsey"), threads)


def run_convergence(cfg: ExperimentConfig, threads: int = 1) -> list[SweepRecord]:
    return run(_checked(cfg, "convergence"), threads)


def run_transmission_sweep(cfg: ExperimentConfig, threads: int = 1) -> list[SweepRecord]:
    return run(_checked(cfg, "transmission-sweep"), threads)


def _checked(cfg: ExperimentConfig, name: str) -> ExperimentConfig:
    if cfg.experiment != name:
        raise ConfigError(f"config is for {cfg.experiment!r}, not {name!r}")
    return cfg


def summarize(cfg: ExperimentConfig, records: list[SweepRecord]) -> dict:
    statuses = [r.status for r in records]
    out = {
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "cells": len(records),
        "ok": sum(s == "ok" for s in statuses),
        "failed": sum(s not in ("ok", "pure-input") for s in statuses),
    }
    for key in ("delta_fidelity", "db_gain", "ape_before", "ape_after"):
        vals = [r.values[key] for r in records if r.values.get(key) is not None]
        if vals:
            out[f"mean_{key}"] = float(np.mean(vals))
    return out


__all__ = [
    "COLUMNS", "Cell", "SweepRecord", "cells", "convergence_cell", "noisy_state", "purify",
    "run", "run_cell", "run_convergence", "run_fidelity_sweep", "run_qfi_sweep",
    "run_ramsey", "run_transmission_sweep", "summarize",
]
