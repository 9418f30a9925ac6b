"""Variational principal-component extraction with a rotation-layer circuit.

A circuit U(theta) is trained to diagonalise rho.  The loss is the
off-diagonal Hilbert-Schmidt weight of U rho U^dagger, the gradient is the
symmetric finite difference

    g_j = (L(theta_j + delta) - L(theta_j - delta)) / 2

(not divided by delta; the step size absorbs that scale) and the update is
theta_j <- theta_j - step_j * g_j.  The purified state is U^dagger|k><k|U for
the basis index k carrying the largest weight after diagonalisation.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .sensing import cnot
from .states import eigendecompose, fidelity_pure


STEP_RULES = ("fixed", "bfgs")


class NotConvergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class Ansatz:
    n: int
    layers: int = 0  # 0 -> one layer per qubit

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be at least 1, got {self.n}")
        if self.layers < 0:
            raise ValueError(f"layers must be non-negative, got {self.layers}")
        if self.layers == 0:
            object.__setattr__(self, "layers", self.n)

    @property
    def param_count(self) -> int:
        return 2 * self.n * self.layers

    @classmethod
    def full_depth(cls, n: int) -> "Ansatz":
        """Enough layers that the parameter count reaches dim SU(2**n) = 4**n - 1."""
        return cls(n, max(1, -(-(4**n - 1) // (2 * n))))


@dataclass(frozen=True)
class OptimizerConfig:
    delta: float = 0.05
    step: float | tuple = 2.0
    max_iters: int = 200
    loss_tol: float = 1e-6
    init_params: tuple = (np.pi / 2, np.pi / 3)
    step_rule: str = "bfgs"
    restarts: int = 3
    restart_seed: int = 0

    def __post_init__(self):
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"unknown step_rule {self.step_rule!r}; expected one of {STEP_RULES}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if np.any(np.asarray(self.step, dtype=float) <= 0):
            raise ValueError("every step size must be positive")
        if self.loss_tol < 0:
            raise ValueError(f"loss_tol must be non-negative, got {self.loss_tol}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be non-negative, got {self.max_iters}")
        if self.restarts < 0:
            raise ValueError(f"restarts must be non-negative, got {self.restarts}")

    def initial_theta(self, count: int) -> np.ndarray:
        """Tile ``init_params`` to ``count`` entries."""
        init = np.asarray(self.init_params, dtype=float)
        return np.resize(init, count)

    def steps(self, count: int) -> np.ndarray:
        return np.resize(np.asarray(self.step, dtype=float), count)


class TraceRecord(NamedTuple):
    iteration: int
    theta: np.ndarray
    loss: float
    fidelity: float


@dataclass
class OptimizationTrace:
    records: list = field(default_factory=list)
    status: str = "max-iters"

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def final(self) -> TraceRecord:
        return self.records[-1]

    @property
    def theta(self) -> np.ndarray:
        return self.records[-1].theta

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    @property
    def iterations(self) -> int:
        return self.records[-1].iteration

    def iterations_to(self, fidelity: float) -> int | None:
        """First iteration whose fidelity against the oracle reaches ``fidelity``."""
        for r in self.records:
            if r.fidelity >= fidelity:
                return r.iteration
        return None

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        k = len(self.records[0].theta) if self.records else 0
        writer.writerow(["iteration", "loss", "fidelity_vs_oracle"] + [f"theta_{j}" for j in range(k)])
        for r in self.records:
            writer.writerow([r.iteration, f"{r.loss:.12g}", f"{r.fidelity:.12g}"]
                            + [f"{t:.12g}" for t in r.theta])
        return buf.getvalue()


class Principal(NamedTuple):
    rho: np.ndarray
    eigenvalue: float
    vector: np.ndarray


@lru_cache(maxsize=None)
def _entangler(n: int) -> np.ndarray:
    if n == 1:
        return np.eye(2, dtype=complex)
    pairs = [(0, 1)] if n == 2 else [(k, (k + 1) % n) for k in range(n)]
    u = np.eye(2**n, dtype=complex)
    for c, t in pairs:
        u = cnot(c, t, n) @ u
    return u


def rotation_blocks(theta) -> np.ndarray:
    """Rx(theta_x) @ Ry(theta_y) for every (theta_x, theta_y) pair in the last axis."""
    theta = np.asarray(theta, dtype=float)
    cx, sx = np.cos(theta[..., 0] / 2), np.sin(theta[..., 0] / 2)
    cy, sy = np.cos(theta[..., 1] / 2), np.sin(theta[..., 1] / 2)
    b = np.empty(theta.shape[:-1] + (2, 2), dtype=complex)
    b[..., 0, 0] = cx * cy - 1j * sx * sy
    b[..., 0, 1] = -cx * sy - 1j * sx * cy
    b[..., 1, 0] = cx * sy - 1j * sx * cy
    b[..., 1, 1] = cx * cy + 1j * sx * sy
    return b


def _layer_unitaries(a: Ansatz, theta) -> tuple[np.ndarray, list]:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (a.param_count,):
        raise ValueError(f"expected {a.param_count} parameters, got {theta.shape}")
    blocks = rotation_blocks(theta.reshape(a.layers, a.n, 2))
    ent = _entangler(a.n)
    layers = []
    for row in blocks:
        rot = row[0]
        for b in row[1:]:
            rot = np.kron(rot, b)
        layers.append(ent @ rot if a.n > 1 else rot)
    return blocks, layers


def ansatz_unitary(a: Ansatz, theta) -> np.ndarray:
    """Layers of Rx(theta_x) Ry(theta_y) on every qubit, each followed by a CNOT ring."""
    u = np.eye(2**a.n, dtype=complex)
    for layer in _layer_unitaries(a, theta)[1]:
        u = layer @ u
    return u


def offdiag_weight(d: np.ndarray) -> float:
    off = np.abs(d) ** 2
    np.fill_diagonal(off, 0.0)
    return float(off.sum())


def loss(theta, rho, a: Ansatz) -> float:
    """Sum of |(U rho U^dagger)_ij|^2 over i != j."""
    u = ansatz_unitary(a, theta)
    return max(offdiag_weight(u @ rho @ u.conj().T), 0.0)


def fd_gradient(theta, rho, a: Ansatz, delta: float, loss_fn=None) -> np.ndarray:
    """g_j = (L(theta_j + delta) - L(theta_j - delta)) / 2 for every parameter."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    theta = np.asarray(theta, dtype=float)
    if loss_fn is not None:
        g = np.empty_like(theta)
        for j in range(theta.size):
            up, down = theta.copy(), theta.copy()
            up[j] += delta
            down[j] -= delta
            g[j] = 0.5 * (loss_fn(up, rho, a) - loss_fn(down, rho, a))
        return g
    plus, minus = _shifted_losses(theta, np.asarray(rho, dtype=complex), a, delta)
    return 0.5 * (plus - minus)


def _apply_on_qubit(m: np.ndarray, mat: np.ndarray, q: int, n: int) -> np.ndarray:
    """embed(m, q) @ mat without forming the embedded operator."""
    dim = 2**n
    t = np.tensordot(m, mat.reshape((2,) * n + (dim,)), axes=([1], [q]))
    return np.moveaxis(t, 0, q).reshape(dim, dim)


def _shifted_losses(theta, rho, a: Ansatz, delta: float):
    # Shifting one angle changes one 2x2 block, so U' = S_l (M on qubit q) P_l
    # with cached prefix P_l and suffix S_l of the layer product.
    n, dim = a.n, 2**a.n
    blocks, layers = _layer_unitaries(a, theta)
    th = theta.reshape(a.layers, n, 2)
    prefix = [np.eye(dim, dtype=complex)]
    for layer in layers:
        prefix.append(layer @ prefix[-1])
    suffix = [np.eye(dim, dtype=complex)] * (a.layers + 1)
    for l in range(a.layers - 1, -1, -1):
        suffix[l] = suffix[l + 1] @ layers[l]
    plus = np.empty(theta.size)
    minus = np.empty(theta.size)
    j = 0
    for l in range(a.layers):
        s_l = suffix[l]
        rho_l = prefix[l] @ rho @ prefix[l].conj().T
        for q in range(n):
            b_dag = blocks[l, q].conj().T
            for k in range(2):
                for sign, out in ((1.0, plus), (-1.0, minus)):
                    shifted = th[l, q].copy()
                    shifted[k] += sign * delta
                    m = b_dag @ rotation_blocks(shifted)
                    x = _apply_on_qubit(m, rho_l, q, n)
                    x = _apply_on_qubit(m.conj(), x.T, q, n).T
                    out[j] = max(offdiag_weight(s_l @ x @ s_l.conj().T), 0.0)
                j += 1
    return plus, minus


def purified(rho, theta, a: Ansatz) -> Principal:
    """U^dagger|k><k|U for the dominant diagonal entry k of U rho U^dagger (no convergence check)."""
    u = ansatz_unitary(a, theta)
    diag = np.real(np.diag(u @ rho @ u.conj().T))
    k = int(np.flatnonzero(diag >= diag.max() - 1e-12)[0])
    vec = u.conj().T[:, k]
    return Principal(np.outer(vec, vec.conj()), float(diag[k]), vec)


def extract_principal(rho, theta_star, a: Ansatz, threshold: float = 1e-4) -> Principal:
    rho = np.asarray(rho, dtype=complex)
    lval = loss(theta_star, rho, a)
    if lval >= threshold:
        raise NotConvergedError(f"loss {lval:.3g} is above the diagonality threshold {threshold:g}")
    return purified(rho, theta_star, a)


def pca_oracle(rho) -> Principal:
    """Exact top eigenvector projector and eigenvalue."""
    spec = eigendecompose(rho)
    vec = spec.eigenvectors[:, 0]
    return Principal(np.outer(vec, vec.conj()), float(spec.eigenvalues[0]), vec)


def optimize(rho, a: Ansatz, cfg: OptimizerConfig = OptimizerConfig(), theta0=None) -> OptimizationTrace:
    """Descend the loss with finite-difference gradients until it drops below ``cfg.loss_tol``.

    ``step_rule="fixed"`` applies theta_j -= step_j g_j every iteration.
    ``"bfgs"`` replaces the diagonal step by a matrix: it starts as diag(step)
    (so the first update is the fixed rule), is refined from successive
    gradients by the BFGS inverse update, and every step is backtracked
    until the loss decreases.

    An attempt that spends ``max_iters`` without converging is followed by up
    to ``cfg.restarts`` more, each from uniform random angles drawn from
    ``cfg.restart_seed``.  Iteration numbers keep counting across attempts.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2**a.n, 2**a.n):
        raise ValueError(f"ansatz acts on {a.n} qubits, rho has shape {rho.shape}")
    target = pca_oracle(rho).vector
    theta = cfg.initial_theta(a.param_count) if theta0 is None else np.asarray(theta0, float).copy()
    steps = cfg.steps(a.param_count)
    trace = OptimizationTrace()
    offset = 0

    def record(i, th, lval):
        fid = fidelity_pure(target, purified(rho, th, a).rho)
        trace.records.append(TraceRecord(offset + i, th.copy(), lval, fid))

    rng = np.random.default_rng(cfg.restart_seed)
    best = None
    for attempt in range(cfg.restarts + 1):
        if attempt:
            offset = trace.final.iteration + 1
            theta = rng.uniform(0.0, 2 * np.pi, a.param_count)
        lval = loss(theta, rho, a)
        record(0, theta, lval)
        if cfg.step_rule == "bfgs":
            _bfgs(theta, lval, rho, a, cfg, steps, record)
        else:
            for i in range(1, cfg.max_iters + 1):
                if lval < cfg.loss_tol:
                    break
                theta = theta - steps * fd_gradient(theta, rho, a, cfg.delta)
                lval = loss(theta, rho, a)
                record(i, theta, lval)
        if best is None or trace.final.loss < best.loss:
            best = trace.final
        if trace.final.loss < cfg.loss_tol:
            break
    if best is not trace.final:
        # finish on the best parameters seen so that .theta is the useful answer
        trace.records.append(best._replace(iteration=trace.final.iteration + 1))
    trace.status = "converged" if best.loss < cfg.loss_tol else "max-iters"
    return trace


def _bfgs(theta, lval, rho, a, cfg, steps, record):
    h0 = np.diag(steps)
    hinv = h0.copy()
    g = fd_gradient(theta, rho, a, cfg.delta)
    for i in range(1, cfg.max_iters + 1):
        if lval < cfg.loss_tol:
            return
        direction = -hinv @ g
        slope = g @ direction / cfg.delta
        if slope >= 0:
            hinv = h0.copy()
            direction = -hinv @ g
            slope = g @ direction / cfg.delta
        cand, cand_loss = _line_search(theta, lval, direction, slope, rho, a)
        if cand_loss > lval:
            # no descent along this direction: restart from the diagonal step
            cand, cand_loss, hinv = theta, lval, h0.copy()
        g_new = fd_gradient(cand, rho, a, cfg.delta)
        s, y = cand - theta, g_new - g
        sy = s @ y
        if sy > 1e-16:
            r = 1.0 / sy
            left = np.eye(s.size) - r * np.outer(s, y)
            hinv = left @ hinv @ left.T + r * np.outer(s, s)
        theta, lval, g = cand, cand_loss, g_new
        record(i, theta, lval)


def _line_search(theta, lval, direction, slope, rho, a, c1=1e-4, max_doublings=40):
    """Backtrack from t = 1 to the Armijo condition; if t = 1 passes, keep doubling while the loss falls."""
    t = 1.0
    cand_loss = loss(theta + direction, rho, a)
    if cand_loss <= lval + c1 * slope:
        for _ in range(max_doublings):
            nxt = loss(theta + 2 * t * direction, rho, a)
            if nxt >= cand_loss:
                break
            t, cand_loss = 2 * t, nxt
        return theta + t * direction, cand_loss
    while t > 1e-10:
        t *= 0.5
        cand_loss = loss(theta + t * direction, rho, a)
        if cand_loss <= lval + c1 * t * slope:
            break
    return theta + t * direction, cand_loss
