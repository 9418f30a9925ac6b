"""Accuracy and precision figures of merit."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channels import KrausChannel, apply_channel
from .sensing import SensingConfig, phase_generator, target_state
from .states import eigendecompose, projector

RANK_CUTOFF = 1e-12
FD_STEP = 1e-6


@dataclass(frozen=True)
class QfiResult:
    value: float
    parameter: str = "phi"
    rank_cutoff: float = RANK_CUTOFF

    def __float__(self):
        return self.value


def _check_derivative(drho, dim: int) -> np.ndarray:
    drho = np.asarray(drho, dtype=complex)
    if drho.shape != (dim, dim):
        raise ValueError(f"drho has shape {drho.shape}, expected {(dim, dim)}")
    if np.max(np.abs(drho - drho.conj().T)) > 1e-9:
        raise ValueError("drho is not Hermitian")
    if abs(np.trace(drho)) > 1e-9:
        raise ValueError("drho is not traceless")
    return drho


def qfi(rho, drho, rank_cutoff: float = RANK_CUTOFF) -> QfiResult:
    """Quantum Fisher information from the eigen-expansion of rho.

    Sums 4 lam_m |<m|drho|n>|^2 / (lam_m + lam_n)^2 over the support of rho
    (lam_m > rank_cutoff) and all n.
    """
    rho = np.asarray(rho, dtype=complex)
    drho = _check_derivative(drho, rho.shape[0])
    lam, vecs = eigendecompose(rho)
    a = np.abs(vecs.conj().T @ drho @ vecs) ** 2
    total = 0.0
    for m in np.flatnonzero(lam > rank_cutoff):
        den = lam[m] + lam
        keep = den > rank_cutoff
        total += np.sum(4 * lam[m] * a[m, keep] / den[keep] ** 2)
    return QfiResult(float(total), "phi", rank_cutoff)


def qfi_symmetric(rho, drho, rank_cutoff: float = RANK_CUTOFF) -> float:
    """Same quantity as :func:`qfi`, in the form 2 sum |<m|drho|n>|^2 / (lam_m + lam_n)."""
    rho = np.asarray(rho, dtype=complex)
    drho = _check_derivative(drho, rho.shape[0])
    lam, vecs = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    a = np.abs(vecs.conj().T @ drho @ vecs) ** 2
    den = lam[:, None] + lam[None, :]
    keep = den > rank_cutoff
    return float(2 * np.sum(a[keep] / den[keep]))


def qfi_pure(psi, dpsi) -> float:
    """4 (<dpsi|dpsi> - |<psi|dpsi>|^2)."""
    psi = np.asarray(psi, dtype=complex)
    dpsi = np.asarray(dpsi, dtype=complex)
    return float(4 * (np.vdot(dpsi, dpsi).real - abs(np.vdot(psi, dpsi)) ** 2))


@dataclass(frozen=True)
class EncodingFamily:
    """Post-sequence probe state as a function of phi, followed by fixed channels."""

    n: int = 1
    channels: tuple = ()

    def pure(self, phi: float) -> np.ndarray:
        return projector(target_state(phi, self.n))

    def rho(self, phi: float) -> np.ndarray:
        out = self.pure(phi)
        for ch in self.channels:
            out = apply_channel(out, ch)
        return out

    def drho(self, phi: float) -> np.ndarray:
        g = phase_generator(self.n)
        p = self.pure(phi)
        out = -1j * (g @ p - p @ g)
        for ch in self.channels:
            # channels are linear and phi-independent
            out = apply_channel(out, ch)
        return out

    def then(self, *channels: KrausChannel) -> "EncodingFamily":
        return EncodingFamily(self.n, self.channels + tuple(channels))


def central_difference(fn: Callable[[float], np.ndarray], phi: float, h: float = FD_STEP) -> np.ndarray:
    return (np.asarray(fn(phi + h)) - np.asarray(fn(phi - h))) / (2 * h)


def drho_dphi(family, phi: float, fallback: bool = False, h: float = FD_STEP) -> np.ndarray:
    """d rho / d phi: analytic for :class:`EncodingFamily`, central difference for a callable.

    Any other family is rejected unless ``fallback`` is set and ``family`` is
    a callable phi -> rho.
    """
    if isinstance(family, EncodingFamily):
        return family.drho(phi)
    if fallback and callable(family):
        d = central_difference(family, phi, h)
        return 0.5 * (d + d.conj().T)
    raise TypeError(f"no analytic derivative for {type(family).__name__}; pass fallback=True")


def qfi_field(rho, drho_phi, cfg: SensingConfig, rank_cutoff: float = RANK_CUTOFF) -> QfiResult:
    """QFI with respect to B_s via d rho/d B_s = gyro tau d rho/d phi."""
    per_phi = qfi(rho, drho_phi, rank_cutoff).value
    return QfiResult(cfg.scale**2 * per_phi, "B_s", rank_cutoff)


def heisenberg_limit(n: int, cfg: SensingConfig) -> float:
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    return n**2 * cfg.scale**2


def sql(n: int, cfg: SensingConfig) -> float:
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    return n * cfg.scale**2


def projector_derivative(rho, drho, basis) -> np.ndarray:
    """First-order derivative of the projector onto ``basis[:, 0]``.

    ``basis`` must (approximately) diagonalise rho, with the principal
    direction in column 0.
    """
    rho = np.asarray(rho, dtype=complex)
    basis = np.asarray(basis, dtype=complex)
    lam = np.real(np.einsum("ik,ij,jk->k", basis.conj(), rho, basis))
    gaps = lam[0] - lam[1:]
    if np.any(gaps <= 1e-12):
        raise ValueError("principal eigenvalue is degenerate; projector derivative undefined")
    top = basis[:, 0]
    rest = basis[:, 1:]
    coeff = (rest.conj().T @ (drho @ top)) / gaps
    dvec = rest @ coeff
    dp = np.outer(dvec, top.conj())
    return dp + dp.conj().T


def ape(actual: float, forecast: float) -> float:
    """|A - F| / ((A + F) / 2)."""
    mid = 0.5 * (actual + forecast)
    if mid == 0:
        raise ZeroDivisionError("APE is undefined when actual + forecast == 0")
    return abs((actual - forecast) / mid)


def qcrb_variance(n_meas: int, qfi_value: float) -> float:
    """Cramer-Rao lower bound 1 / (N F); infinite when the QFI vanishes."""
    if n_meas < 1:
        raise ValueError(f"n_meas must be at least 1, got {n_meas}")
    if qfi_value < 0:
        raise ValueError(f"QFI must be non-negative, got {qfi_value}")
    if qfi_value == 0:
        return math.inf
    return 1.0 / (n_meas * qfi_value)


def db_gain(f_after: float, f_before: float) -> float:
    if f_after <= 0 or f_before <= 0:
        raise ValueError("dB gain needs two positive quantities")
    return 10.0 * math.log10(f_after / f_before)
