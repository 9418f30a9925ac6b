"""Dense state-vector and density-matrix primitives.

States are plain complex numpy arrays.  Qubit 0 is the leftmost Kronecker
factor, so basis index ``k`` reads its qubits most-significant-bit first.
"""
from __future__ import annotations

import json
from functools import reduce
from typing import NamedTuple

import numpy as np

CONSTRUCT_TOL = 1e-10
RECONSTRUCT_TOL = 1e-9

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
PAULIS = (I2, X, Y, Z)


class InvalidStateError(ValueError):
    """Raised when an array violates a state, unitary or channel invariant."""


class Spectrum(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, aligned with eigenvalues


def n_qubits(dim: int) -> int:
    n = int(round(np.log2(dim))) if dim > 0 else -1
    if n < 0 or 2**n != dim:
        raise InvalidStateError(f"dimension {dim} is not a power of two")
    return n


def tensor_product(*ops) -> np.ndarray:
    """Kronecker product of the operands, first operand = qubit 0."""
    if not ops:
        raise ValueError("tensor_product needs at least one operand")
    return reduce(np.kron, (np.asarray(op, dtype=complex) for op in ops))


def basis_state(bits: str | int, n: int | None = None) -> np.ndarray:
    if isinstance(bits, str):
        n, index = len(bits), int(bits, 2)
    else:
        if n is None:
            raise ValueError("n is required for an integer basis index")
        index = bits
    psi = np.zeros(2**n, dtype=complex)
    psi[index] = 1.0
    return psi


def embed(op: np.ndarray, qubit: int, n: int) -> np.ndarray:
    """Lift a single-qubit operator onto ``qubit`` of an ``n``-qubit register."""
    factors = [I2] * n
    factors[qubit] = np.asarray(op, dtype=complex)
    return tensor_product(*factors)


def validate_state_vector(psi, tol: float = CONSTRUCT_TOL) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1:
        raise InvalidStateError("state vector must be one-dimensional")
    n_qubits(psi.size)
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > tol:
        raise InvalidStateError(f"state vector norm {norm!r} differs from 1")
    return psi


def validate_density(rho, tol: float = CONSTRUCT_TOL) -> np.ndarray:
    """Return ``rho`` as a complex array after checking Hermiticity, trace and PSD."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidStateError(f"density matrix must be square, got {rho.shape}")
    n_qubits(rho.shape[0])
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise InvalidStateError("density matrix is not Hermitian")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > tol:
        raise InvalidStateError(f"density matrix trace {tr!r} differs from 1")
    lam_min = np.linalg.eigvalsh(rho).min()
    if lam_min < -tol:
        raise InvalidStateError(f"density matrix has negative eigenvalue {lam_min!r}")
    return rho


def is_unitary(u, tol: float = CONSTRUCT_TOL) -> bool:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) <= tol)


def validate_unitary(u, tol: float = CONSTRUCT_TOL) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if not is_unitary(u, tol):
        raise InvalidStateError("matrix is not unitary")
    return u


def projector(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def purity(rho) -> float:
    rho = np.asarray(rho, dtype=complex)
    return float(np.real(np.vdot(rho, rho)))


def fix_phase(v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Rotate the global phase so the first non-negligible component is real positive."""
    v = np.asarray(v, dtype=complex)
    nz = np.flatnonzero(np.abs(v) > tol)
    if nz.size == 0:
        return v
    a = v[nz[0]]
    return v * (abs(a) / a)


def _tie_key(vec: np.ndarray) -> int:
    mag = np.abs(vec)
    return int(np.flatnonzero(mag >= mag.max() - 1e-12)[0])


def eigendecompose(rho, tie_tol: float = 1e-12) -> Spectrum:
    """Eigenvalues (descending) and phase-fixed eigenvectors of a density matrix.

    Exactly degenerate eigenvalues are ordered by the lowest basis index at
    which their eigenvector has its largest-magnitude amplitude.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidStateError("eigendecompose needs a square matrix")
    if np.max(np.abs(rho - rho.conj().T)) > CONSTRUCT_TOL:
        raise InvalidStateError("eigendecompose needs a Hermitian matrix")
    herm = 0.5 * (rho + rho.conj().T)
    w, v = np.linalg.eigh(herm)
    order = list(np.argsort(-w, kind="stable"))
    # within each tie cluster, reorder by the tie key
    out: list[int] = []
    i = 0
    while i < len(order):
        j = i + 1
        while j < len(order) and abs(w[order[j]] - w[order[i]]) <= tie_tol:
            j += 1
        cluster = order[i:j]
        if len(cluster) > 1:
            cluster = _canonical_cluster(v, cluster)
        out.extend(cluster)
        i = j
    vecs = np.column_stack([fix_phase(v[:, k]) for k in out])
    return Spectrum(w[out].astype(float), vecs)


def _canonical_cluster(v, cluster):
    # A degenerate eigenspace has no preferred basis; project the computational
    # basis onto it so the result does not depend on LAPACK internals.
    sub = v[:, cluster]
    proj = sub @ sub.conj().T
    picked = []
    for k in range(proj.shape[0]):
        cand = proj[:, k].copy()
        for p in picked:
            cand -= p * np.vdot(p, cand)
        nrm = np.linalg.norm(cand)
        if nrm > 1e-8:
            picked.append(cand / nrm)
        if len(picked) == len(cluster):
            break
    for slot, vec in zip(cluster, picked):
        v[:, slot] = vec
    return sorted(cluster, key=lambda k: _tie_key(v[:, k]))


def reconstruct(spec: Spectrum) -> np.ndarray:
    k = spec.eigenvectors
    return (k * spec.eigenvalues) @ k.conj().T


def fidelity_pure(psi, rho) -> float:
    """Overlap <psi|rho|psi> of a pure target with a (possibly mixed) state."""
    psi = np.asarray(psi, dtype=complex)
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (psi.size, psi.size):
        raise ValueError(f"dimension mismatch: psi {psi.shape}, rho {rho.shape}")
    val = np.vdot(psi, rho @ psi)
    if abs(val.imag) > CONSTRUCT_TOL:
        raise InvalidStateError("fidelity has an imaginary part; rho is not Hermitian")
    return float(min(max(val.real, 0.0), 1.0))


def apply_unitary(rho, u) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    u = np.asarray(u, dtype=complex)
    if u.shape != rho.shape:
        raise ValueError(f"dimension mismatch: rho {rho.shape}, u {u.shape}")
    validate_unitary(u)
    return u @ rho @ u.conj().T


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    g = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(g)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_density(n: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random mixed state of ``n`` qubits with the given rank (Hilbert-Schmidt induced)."""
    dim = 2**n
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


# --- matrix exchange format -------------------------------------------------

def dumps_matrix(m) -> str:
    """Serialise a complex matrix as JSON with 17 significant digits per float."""
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    rows, cols = m.shape
    n = n_qubits(rows) if rows == cols and rows & (rows - 1) == 0 else None
    pairs = ",\n    ".join(
        f"[{x.real:.17e}, {x.imag:.17e}]" for x in m.reshape(-1)
    )
    n_txt = "null" if n is None else str(n)
    return (
        "{\n"
        f'  "n": {n_txt},\n'
        f'  "shape": [{rows}, {cols}],\n'
        '  "order": "row-major",\n'
        f'  "entries": [\n    {pairs}\n  ]\n'
        "}\n"
    )


def loads_matrix(text: str) -> np.ndarray:
    doc = json.loads(text)
    rows, cols = doc["shape"]
    entries = doc["entries"]
    if len(entries) != rows * cols:
        raise ValueError(f"expected {rows * cols} entries, found {len(entries)}")
    flat = np.array([complex(re, im) for re, im in entries], dtype=complex)
    return flat.reshape(rows, cols)
