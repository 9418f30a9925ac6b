"""Experiment configuration files.

Grammar: one ``key = value`` assignment per line; ``#`` starts a comment.
Keys are dotted (``sensing.tau_s``); values are JSON literals, and anything
that does not parse as JSON is taken as a bare string.  Grid axes are
written ``grid.<axis> = [min, max, points]`` or ``grid.<axis> = {"values": [...]}``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..channels import NOISE_KINDS
from ..qpca import STEP_RULES, OptimizerConfig
from ..sensing import NV_GYRO, SensingConfig
from ..states import is_unitary

EXPERIMENTS = ("fidelity-sweep", "qfi-sweep", "ramsey", "convergence", "transmission-sweep")
AXES = (
    "p0", "overlap", "sigma_gauss", "sigma_ratio", "tau_s", "phi",
    "n_qubits", "gamma_loss", "bs_gauss", "b0_gauss",
)
INT_AXES = ("n_qubits",)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Axis:
    name: str
    values: tuple

    @classmethod
    def linspace(cls, name: str, lo: float, hi: float, points: int) -> "Axis":
        if points < 1:
            raise ConfigError(f"grid axis {name!r} needs at least one point")
        vals = np.linspace(lo, hi, int(points)) if points > 1 else np.array([lo])
        return cls(name, _typed(name, vals))


def _typed(name, vals):
    if name in INT_AXES:
        return tuple(int(round(v)) for v in vals)
    return tuple(float(v) for v in vals)


@dataclass(frozen=True)
class NoiseSettings:
    kind: str = "unitary-mixture"
    p0: float = 1.0
    overlap: float | None = None
    noise_unitary: np.ndarray | None = field(default=None, compare=False)
    gamma_loss: float = 0.0
    sigma_gauss: float = 0.0
    sigma_ratio: float | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    output: str | None = None
    sensing: SensingConfig = SensingConfig()
    noise: NoiseSettings = NoiseSettings()
    optimizer: OptimizerConfig = OptimizerConfig()
    layers: int = 0
    n_fields: int = 0
    antithetic: bool = True
    shots: int = 0
    threshold: float = 1e-4
    fidelity_target: float = 0.995
    grid: tuple = ()

    @property
    def cell_count(self) -> int:
        return int(np.prod([len(a.values) for a in self.grid])) if self.grid else 1


def default_config(experiment: str) -> ExperimentConfig:
    """Desk-scale defaults for each experiment."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")
    base = ExperimentConfig(experiment=experiment)
    if experiment == "fidelity-sweep":
        return replace(base, grid=(Axis.linspace("p0", 0.55, 0.99, 20),
                                   Axis.linspace("overlap", 0.0, 0.99, 20)))
    if experiment == "qfi-sweep":
        return replace(
            base,
            sensing=replace(base.sensing, tau=20e-9),
            noise=NoiseSettings(kind="unitary-mixture", p0=0.8),
            grid=(Axis("n_qubits", (2, 4, 6)),
                  Axis.linspace("overlap", 0.0, 0.95, 15),
                  Axis("tau_s", (20e-9, 40e-9, 60e-9, 100e-9))),
        )
    if experiment == "ramsey":
        return replace(
            base, n_fields=800,
            optimizer=replace(base.optimizer, loss_tol=1e-24),
            noise=NoiseSettings(kind="gaussian-field"),
            grid=(Axis.linspace("sigma_ratio", 0.0, 0.5, 6),
                  Axis("phi", tuple(np.pi * np.array([1 / 8, 1 / 4, 1 / 2, 3 / 4])))),
        )
    if experiment == "convergence":
        return replace(
            base,
            noise=NoiseSettings(kind="gaussian-field"),
            grid=(Axis("n_qubits", (2, 3, 4)),
                  Axis("sigma_ratio", (0.0, 0.05, 0.1, 0.2, 0.3, 0.4))),
        )
    return replace(
        base,
        sensing=replace(base.sensing, n=4, tau=20e-9),
        noise=NoiseSettings(kind="unitary-mixture", p0=0.8),
        grid=(Axis("gamma_loss", (0.0, 0.03, 0.0415, 0.06, 0.09, 0.15)),
              Axis.linspace("overlap", 0.0, 0.95, 15)),
    )


def parse_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


_SENSING_KEYS = {
    "b0_gauss": "b0", "bs_gauss": "bs", "tau_s": "tau", "gyro_rad_per_s_gauss": "gyro",
    "n_qubits": "n", "sigma_gauss": "sigma",
}
_RUN_KEYS = {"n_fields", "shots", "seed"}
_NOISE_KEYS = {"kind", "p0", "overlap", "noise_unitary", "gamma_loss", "sigma", "sigma_gauss", "sigma_ratio"}
_OPT_KEYS = {"delta", "step", "max_iters", "loss_tol", "init_params", "step_rule", "restarts"}


def build_config(values: dict, experiment: str | None = None) -> ExperimentConfig:
    values = dict(values)
    exp = values.pop("experiment", None)
    if experiment is not None and exp is not None and exp != experiment:
        raise ConfigError(f"config is for {exp!r}, not {experiment!r}")
    exp = exp or experiment
    if exp is None:
        raise ConfigError("no experiment named")
    cfg = default_config(exp)
    try:
        return _apply(cfg, values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from err


def _apply(cfg: ExperimentConfig, values: dict) -> ExperimentConfig:
    sensing = {}
    noise = {}
    opt = {}
    top = {}
    grid = {}
    for key, val in values.items():
        section, _, name = key.partition(".")
        if not name:
            if section in ("seed", "output"):
                top[section] = val
                continue
            raise ConfigError(f"unknown top-level key {key!r}")
        if section == "sensing":
            if name in _SENSING_KEYS:
                sensing[_SENSING_KEYS[name]] = val
            elif name in _RUN_KEYS:
                top[name] = val
            elif name == "antithetic":
                top["antithetic"] = bool(val)
            else:
                raise ConfigError(f"unknown sensing key {name!r}")
        elif section == "noise":
            if name not in _NOISE_KEYS:
                raise ConfigError(f"unknown noise key {name!r}")
            noise["sigma_gauss" if name == "sigma" else name] = val
        elif section == "optimizer":
            if name not in _OPT_KEYS:
                raise ConfigError(f"unknown optimizer key {name!r}")
            opt[name] = tuple(val) if isinstance(val, list) else val
        elif section == "ansatz":
            if name != "layers":
                raise ConfigError(f"unknown ansatz key {name!r}")
            top["layers"] = int(val)
        elif section == "purify":
            if name == "threshold":
                top["threshold"] = float(val)
            elif name == "fidelity_target":
                top["fidelity_target"] = float(val)
            else:
                raise ConfigError(f"unknown purify key {name!r}")
        elif section == "grid":
            if name not in AXES:
                raise ConfigError(f"unknown grid axis {name!r}; expected one of {AXES}")
            grid[name] = _axis(name, val)
        else:
            raise ConfigError(f"unknown section {section!r}")
    if "n" in sensing:
        sensing["n"] = int(sensing["n"])
    if "noise_unitary" in noise:
        noise["noise_unitary"] = _matrix(noise["noise_unitary"])
    if "kind" in noise and noise["kind"] not in NOISE_KINDS:
        raise ConfigError(f"unknown noise kind {noise['kind']!r}")
    if "step_rule" in opt and opt["step_rule"] not in STEP_RULES:
        raise ConfigError(f"unknown step rule {opt['step_rule']!r}")
    new = replace(
        cfg,
        sensing=replace(cfg.sensing, **sensing),
        noise=replace(cfg.noise, **noise),
        optimizer=replace(cfg.optimizer, **opt),
        **{k: (int(v) if k in ("seed", "n_fields", "shots") else v) for k, v in top.items()},
    )
    if grid:
        new = replace(new, grid=tuple(grid.values()))
    validate(new)
    return new


_UNIT_RANGE = ("p0", "overlap", "gamma_loss")


def validate(cfg: ExperimentConfig) -> None:
    """Range checks that would otherwise surface mid-run."""
    nz = cfg.noise
    for name in _UNIT_RANGE:
        v = getattr(nz, name)
        if v is not None and not 0.0 <= v <= 1.0:
            raise ConfigError(f"noise.{name} must lie in [0, 1], got {v}")
    for name in ("sigma_gauss", "sigma_ratio"):
        v = getattr(nz, name)
        if v is not None and v < 0:
            raise ConfigError(f"noise.{name} must be non-negative, got {v}")
    if nz.noise_unitary is not None and not is_unitary(nz.noise_unitary):
        raise ConfigError("noise.noise_unitary is not unitary")
    for ax in cfg.grid:
        vals = np.asarray(ax.values, dtype=float)
        if ax.name in _UNIT_RANGE and np.any((vals < 0) | (vals > 1)):
            raise ConfigError(f"grid axis {ax.name!r} must lie in [0, 1]")
        if ax.name in ("sigma_gauss", "sigma_ratio") and np.any(vals < 0):
            raise ConfigError(f"grid axis {ax.name!r} must be non-negative")
        if ax.name in ("tau_s", "n_qubits") and np.any(vals <= 0):
            raise ConfigError(f"grid axis {ax.name!r} must be positive")
    if cfg.n_fields < 0 or cfg.shots < 0:
        raise ConfigError("n_fields and shots must be non-negative")
    if cfg.layers < 0:
        raise ConfigError("ansatz.layers must be non-negative")


def _axis(name, val) -> Axis:
    if isinstance(val, dict):
        vals = val.get("values")
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"grid axis {name!r}: 'values' must be a non-empty list")
        return Axis(name, _typed(name, vals))
    if isinstance(val, list) and len(val) == 3:
        lo, hi, points = val
        if not float(points).is_integer():
            raise ConfigError(f"grid axis {name!r}: point count must be an integer")
        return Axis.linspace(name, float(lo), float(hi), int(points))
    raise ConfigError(f"grid axis {name!r} must be [min, max, points] or {{\"values\": [...]}}")


def _matrix(val) -> np.ndarray:
    try:
        arr = np.asarray(val, dtype=float)
    except (TypeError, ValueError) as err:
        raise ConfigError("noise_unitary must be a nested list of [re, im] pairs") from err
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise ConfigError("noise_unitary must be a nested list of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def load_config(path: str | Path, experiment: str | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return build_config(parse_text(text), experiment)


def format_config(cfg: ExperimentConfig) -> str:
    """Render ``cfg`` in the same grammar :func:`parse_text` reads."""
    s, nz, o = cfg.sensing, cfg.noise, cfg.optimizer
    lines = [
        f"experiment = {cfg.experiment}",
        f"seed = {cfg.seed}",
        f"sensing.b0_gauss = {s.b0!r}",
        f"sensing.bs_gauss = {s.bs!r}",
        f"sensing.tau_s = {s.tau!r}",
        f"sensing.gyro_rad_per_s_gauss = {s.gyro!r}",
        f"sensing.n_qubits = {s.n}",
        f"sensing.sigma_gauss = {s.sigma!r}",
        f"sensing.n_fields = {cfg.n_fields}",
        f"sensing.shots = {cfg.shots}",
        f"sensing.antithetic = {json.dumps(cfg.antithetic)}",
        f"noise.kind = {nz.kind}",
        f"noise.p0 = {nz.p0!r}",
        f"noise.gamma_loss = {nz.gamma_loss!r}",
        f"noise.sigma_gauss = {nz.sigma_gauss!r}",
        f"optimizer.delta = {o.delta!r}",
        f"optimizer.step = {json.dumps(o.step)}",
        f"optimizer.max_iters = {o.max_iters}",
        f"optimizer.loss_tol = {o.loss_tol!r}",
        f"optimizer.init_params = {json.dumps([float(x) for x in o.init_params])}",
        f"optimizer.step_rule = {o.step_rule}",
        f"optimizer.restarts = {o.restarts}",
        f"ansatz.layers = {cfg.layers}",
        f"purify.threshold = {cfg.threshold!r}",
        f"purify.fidelity_target = {cfg.fidelity_target!r}",
    ]
    if nz.overlap is not None:
        lines.append(f"noise.overlap = {nz.overlap!r}")
    if nz.sigma_ratio is not None:
        lines.append(f"noise.sigma_ratio = {nz.sigma_ratio!r}")
    if nz.noise_unitary is not None:
        pairs = [[[z.real, z.imag] for z in row] for row in nz.noise_unitary]
        lines.append(f"noise.noise_unitary = {json.dumps(pairs)}")
    for ax in cfg.grid:
        lines.append(f'grid.{ax.name} = {json.dumps({"values": list(ax.values)})}')
    return "\n".join(lines) + "\n"


__all__ = [
    "AXES", "Axis", "ConfigError", "EXPERIMENTS", "ExperimentConfig", "NV_GYRO",
    "NoiseSettings", "build_config", "default_config", "format_config", "load_config",
    "parse_text", "validate",
]
