"""Probe preparation, phase encoding, Ramsey readout and field estimation."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .channels import KrausChannel, x_dephasing
from .states import X, embed, projector

NV_GYRO = 2 * np.pi * 2.8025e6  # rad s^-1 G^-1


@dataclass(frozen=True)
class SensingConfig:
    b0: float = 0.0
    bs: float = 0.25
    tau: float = 356.85e-9
    gyro: float = NV_GYRO
    n: int = 1
    sigma: float = 0.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.gyro > 0:
            raise ValueError(f"gyro must be positive, got {self.gyro}")
        if self.n < 1:
            raise ValueError(f"n must be at least 1, got {self.n}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if not math.isfinite(self.phase):
            raise ValueError("accumulated phase is not finite")

    @property
    def scale(self) -> float:
        """d(phi)/d(B_s) = gyro * tau."""
        return self.gyro * self.tau

    @property
    def phase(self) -> float:
        return self.gyro * (self.b0 + self.bs) * self.tau

    def with_phase(self, phi: float) -> "SensingConfig":
        """Same config with ``tau`` chosen so the accumulated phase equals ``phi``."""
        return replace(self, tau=phi / (self.gyro * (self.b0 + self.bs)))


@dataclass(frozen=True)
class RamseyOutcome:
    p1: float
    shots: int
    rho_out: np.ndarray


def ry(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rx(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def cnot(control: int, target: int, n: int) -> np.ndarray:
    dim = 2**n
    idx = np.arange(dim)
    flipped = np.where((idx >> (n - 1 - control)) & 1, idx ^ (1 << (n - 1 - target)), idx)
    u = np.zeros((dim, dim), dtype=complex)
    u[flipped, idx] = 1.0
    return u


def prepare_probe(n: int) -> np.ndarray:
    """|+> for one qubit, (|0...0> + |1...1>)/sqrt(2) for n >= 2."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    if n == 1:
        return ry(np.pi / 2) @ np.array([1, 0], dtype=complex)
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = psi[-1] = 1 / np.sqrt(2)
    return psi


def evolve_phase(psi, phi: float) -> np.ndarray:
    """Apply exp(-i phi Z/2) to every qubit."""
    psi = np.asarray(psi, dtype=complex)
    n = int(round(math.log2(psi.size)))
    ones = np.array([bin(k).count("1") for k in range(psi.size)])
    return psi * np.exp(1j * phi * (ones - n / 2))


def closing_unitary(n: int) -> np.ndarray:
    """Ry(-pi/2) on qubit 0, preceded for GHZ probes by CNOTs fanning out from qubit 0."""
    u = embed(ry(-np.pi / 2), 0, n)
    for target in range(1, n):
        u = u @ cnot(0, target, n)
    return u


def target_state(phi: float, n: int = 1) -> np.ndarray:
    """Noiseless post-sequence state: (cos(n phi/2)|0> + i sin(n phi/2)|1>) |0...0>."""
    return closing_unitary(n) @ evolve_phase(prepare_probe(n), phi)


def ramsey_density(cfg: SensingConfig) -> np.ndarray:
    return projector(target_state(cfg.phase, cfg.n))


def phase_generator(n: int) -> np.ndarray:
    """Hermitian G with d(psi)/d(phi) = -i G psi for the post-sequence state."""
    return -0.5 * n * embed(X, 0, n)


def field_samples(sigma: float, n_fields: int, seed: int, antithetic: bool = True) -> np.ndarray:
    """Gaussian field offsets N(0, sigma^2); antithetic draws come in +/- pairs."""
    if n_fields < 1:
        raise ValueError(f"n_fields must be at least 1, got {n_fields}")
    rng = np.random.default_rng(seed)
    if not antithetic:
        return sigma * rng.standard_normal(n_fields)
    half = sigma * rng.standard_normal((n_fields + 1) // 2)
    return np.concatenate([half, -half])[:n_fields]


def gaussian_ensemble(cfg: SensingConfig, n_fields: int = 800, seed: int = 0,
                      antithetic: bool = True) -> np.ndarray:
    """Average Ramsey output over random field offsets drawn with the given seed."""
    offsets = field_samples(cfg.sigma, n_fields, seed, antithetic)
    rho = np.zeros((2**cfg.n, 2**cfg.n), dtype=complex)
    for b in offsets:
        rho += projector(target_state(cfg.gyro * (cfg.b0 + cfg.bs + b) * cfg.tau, cfg.n))
    return rho / len(offsets)


def ensemble_coherence(cfg: SensingConfig, n_fields: int = 800, seed: int = 0,
                       antithetic: bool = True) -> tuple[float, float]:
    """Monte-Carlo coherence factor <cos(n gyro tau b)> and its standard error."""
    offsets = field_samples(cfg.sigma, n_fields, seed, antithetic)
    c = np.cos(cfg.n * cfg.scale * offsets)
    if antithetic:
        # +b and -b give the same cosine: only the first half is independent
        c = c[: (n_fields + 1) // 2]
    se = c.std(ddof=1) / np.sqrt(c.size) if c.size > 1 else float("nan")
    return float(c.mean()), float(se)


def dephasing_factor(cfg: SensingConfig) -> float:
    """Closed-form Gaussian average of the encoded coherence, exp(-(n gyro tau sigma)^2 / 2)."""
    return math.exp(-0.5 * (cfg.n * cfg.scale * cfg.sigma) ** 2)


def gaussian_dephasing(cfg: SensingConfig) -> KrausChannel:
    """Exact infinite-ensemble limit of :func:`gaussian_ensemble` as a channel."""
    return x_dephasing(dephasing_factor(cfg), cfg.n)


def excited_population(rho) -> float:
    """Probability of reading qubit 0 in |1>."""
    rho = np.asarray(rho, dtype=complex)
    n = int(round(math.log2(rho.shape[0])))
    proj1 = embed(np.diag([0.0, 1.0]), 0, n)
    return float(min(max(np.trace(proj1 @ rho).real, 0.0), 1.0))


def readout(rho, shots: int = 0, rng: np.random.Generator | None = None) -> RamseyOutcome:
    """Population readout; ``shots=0`` returns the exact expectation."""
    p = excited_population(rho)
    if shots:
        rng = rng if rng is not None else np.random.default_rng()
        p = rng.binomial(shots, p) / shots
    return RamseyOutcome(p1=p, shots=shots, rho_out=np.asarray(rho, dtype=complex))


def estimate_field(p1: float, cfg: SensingConfig) -> float:
    """Invert p1 = sin^2(n phi / 2) on the principal branch phi in [0, pi]."""
    if not 0.0 <= p1 <= 1.0:
        raise ValueError(f"p1 must lie in [0, 1], got {p1}")
    if cfg.scale == 0:
        raise ValueError("degenerate config: gyro * tau is zero")
    return 2.0 * math.asin(math.sqrt(p1)) / (cfg.scale * cfg.n) - cfg.b0

