"""Kraus-operator noise channels and the noise-overlap metric."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.optimize import brentq

from .states import (
    CONSTRUCT_TOL,
    PAULIS,
    X,
    InvalidStateError,
    embed,
    n_qubits,
    tensor_product,
    validate_unitary,
)

NOISE_KINDS = ("unitary-mixture", "depolarize", "amplitude-damping", "gaussian-field")


@dataclass(frozen=True)
class KrausChannel:
    operators: tuple

    def __post_init__(self):
        ops = tuple(np.asarray(e, dtype=complex) for e in self.operators)
        if not ops:
            raise InvalidStateError("a channel needs at least one Kraus operator")
        dim = ops[0].shape[0]
        if any(e.shape != (dim, dim) for e in ops):
            raise InvalidStateError("Kraus operators must share one square shape")
        completeness = sum(e.conj().T @ e for e in ops)
        if np.max(np.abs(completeness - np.eye(dim))) > CONSTRUCT_TOL:
            raise InvalidStateError("channel is not trace preserving")
        object.__setattr__(self, "operators", ops)

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    def __call__(self, rho):
        return apply_channel(rho, self)

    def then(self, other: "KrausChannel") -> "KrausChannel":
        """Channel that applies ``self`` first and ``other`` second."""
        return KrausChannel(tuple(b @ a for a in self.operators for b in other.operators))


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "unitary-mixture"
    p0: float = 1.0
    noise_unitary: np.ndarray | None = field(default=None, compare=False)
    gamma_loss: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        for name in ("p0", "gamma_loss"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if (self.noise_unitary is not None) != (self.kind == "unitary-mixture"):
            raise ValueError("noise_unitary is required for, and only for, kind='unitary-mixture'")
        if self.noise_unitary is not None:
            object.__setattr__(self, "noise_unitary", validate_unitary(self.noise_unitary))


def apply_channel(rho, ch: KrausChannel) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (ch.dim, ch.dim):
        raise ValueError(f"dimension mismatch: rho {rho.shape}, channel dim {ch.dim}")
    ops = np.stack(ch.operators)
    out = np.einsum("kij,jl,kml->im", ops, rho, ops.conj(), optimize=True)
    return 0.5 * (out + out.conj().T)


def identity_channel(dim: int) -> KrausChannel:
    return KrausChannel((np.eye(dim, dtype=complex),))


def unitary_mixture(p0: float, n_op) -> KrausChannel:
    """rho -> p0 rho + (1 - p0) N rho N^dagger for a unitary noise operator N."""
    if not 0.0 <= p0 <= 1.0:
        raise ValueError(f"p0 must lie in [0, 1], got {p0}")
    n_op = validate_unitary(n_op)
    eye = np.eye(n_op.shape[0], dtype=complex)
    return KrausChannel((np.sqrt(p0) * eye, np.sqrt(1.0 - p0) * n_op))


def depolarize_to_mixed(p0: float, n: int) -> KrausChannel:
    """rho -> p0 rho + (1 - p0) I / 2**n, realised as a weighted Pauli twirl."""
    if not 0.0 <= p0 <= 1.0:
        raise ValueError(f"p0 must lie in [0, 1], got {p0}")
    k = 4**n
    w_rest = (1.0 - p0) / k
    ops = []
    for idx, letters in enumerate(itertools.product(PAULIS, repeat=n)):
        w = p0 + w_rest if idx == 0 else w_rest
        if w > 0:
            ops.append(np.sqrt(w) * tensor_product(*letters))
    return KrausChannel(tuple(ops))


def amplitude_damping(gamma_loss: float, n: int = 1) -> KrausChannel:
    """Amplitude damping with loss rate ``gamma_loss``, applied independently to each of ``n`` qubits."""
    if not 0.0 <= gamma_loss <= 1.0:
        raise ValueError(f"gamma_loss must lie in [0, 1], got {gamma_loss}")
    e0 = np.array([[1.0, 0.0], [0.0, np.sqrt(1.0 - gamma_loss)]], dtype=complex)
    e1 = np.array([[0.0, np.sqrt(gamma_loss)], [0.0, 0.0]], dtype=complex)
    single = (e0, e1) if gamma_loss > 0 else (e0,)
    return KrausChannel(tuple(tensor_product(*f) for f in itertools.product(single, repeat=n)))


def x_dephasing(coherence: float, n: int = 1, qubit: int = 0) -> KrausChannel:
    """Average of random x-rotations on one qubit; shrinks the y-z Bloch plane by ``coherence``."""
    if not 0.0 <= coherence <= 1.0:
        raise ValueError(f"coherence must lie in [0, 1], got {coherence}")
    return unitary_mixture(0.5 * (1.0 + coherence), embed(X, qubit, n))


def noise_overlap(rho, n_op) -> float:
    """Tr[rho . N rho N^dagger]."""
    rho = np.asarray(rho, dtype=complex)
    n_op = np.asarray(n_op, dtype=complex)
    if rho.shape != n_op.shape:
        raise ValueError(f"dimension mismatch: rho {rho.shape}, N {n_op.shape}")
    val = np.vdot(rho, n_op @ rho @ n_op.conj().T).real
    return float(min(max(val, 0.0), 1.0))


def rotation_noise(eta: float, generator) -> np.ndarray:
    return expm(-1j * eta * np.asarray(generator, dtype=complex))


def noise_for_overlap(psi, overlap: float, generator=None) -> np.ndarray:
    """Unitary exp(-i eta G) whose overlap |<psi|N|psi>|^2 equals ``overlap``.

    ``eta`` is found by bisection on [0, pi/2], where the overlap falls
    monotonically from 1 to <psi|G|psi>^2 for a Pauli-string generator.
    The default generator is X on qubit 0.
    """
    psi = np.asarray(psi, dtype=complex)
    n = n_qubits(psi.size)
    g = embed(X, 0, n) if generator is None else np.asarray(generator, dtype=complex)
    if not 0.0 <= overlap <= 1.0:
        raise ValueError(f"overlap must lie in [0, 1], got {overlap}")

    def f(eta):
        return abs(np.vdot(psi, rotation_noise(eta, g) @ psi)) ** 2 - overlap

    floor = f(np.pi / 2) + overlap
    if overlap < floor - 1e-12:
        raise ValueError(
            f"generator cannot reach overlap {overlap}; minimum over eta is {floor:.6g}"
        )
    if overlap >= 1.0:
        return np.eye(psi.size, dtype=complex)
    if f(np.pi / 2) >= 0:
        return rotation_noise(np.pi / 2, g)
    eta = brentq(f, 0.0, np.pi / 2, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return rotation_noise(eta, g)
