"""L1 weights for Riemann-Liouville derivatives and the coupled time stepper.

Backward Euler handles ``d/dt``; the order ``1 - alpha_i`` Riemann-Liouville
derivative at ``t_n`` is replaced by ``tau^(alpha_i - 1) sum_{i<n} d_i G^(n-i)``.
The ``i = n`` term (the initial value) is left out of these sums, so the
initial datum only enters through the backward-Euler difference.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .fem import FracStiffness, MassMatrix, UniformMesh, assemble_mass, assemble_stiffness, l2_project
from .model import SystemParams, validate

__all__ = [
    "TimeGrid",
    "L1WeightTable",
    "FieldPair",
    "StepOperator",
    "build_weights",
    "rl_apply",
    "rl_apply_full",
    "build_step_operator",
    "step",
    "solve_transient",
    "solve_scalar",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_n = n * tau``, ``n = 0..L``."""

    tau: float
    L: int

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"L must be a positive integer, got {self.L}")

    @classmethod
    def from_steps(cls, T: float, L: int) -> "TimeGrid":
        return cls(T / L, int(L))

    @classmethod
    def from_tau(cls, T: float, tau: float) -> "TimeGrid":
        L = int(round(T / tau))
        if L < 1 or abs(L * tau - T) > 1e-9 * max(1.0, T):
            raise ValueError(f"tau={tau} does not divide T={T}")
        return cls(T / L, L)

    @property
    def T(self) -> float:
        return self.tau * self.L

    def index_of(self, t: float) -> int:
        n = int(round(t / self.tau))
        if not 0 <= n <= self.L or abs(n * self.tau - t) > 1e-9 * max(1.0, self.T):
            raise ValueError(f"time {t} is not a grid point of tau={self.tau}, L={self.L}")
        return n


@dataclass(frozen=True, eq=False)
class L1WeightTable:
    """Convolution weights for a Riemann-Liouville derivative of order ``order``.

    ``b[j] = ((j+1)^(1-order) - j^(1-order)) / Gamma(2-order)`` and
    ``d[0] = b[0]``, ``d[j] = b[j] - b[j-1]``, for ``j = 0..L-1``.
    """

    order: float
    b: np.ndarray
    d: np.ndarray

    def endpoint_weight(self, n: int) -> float:
        """Weight of ``u(t_0)`` in the full n-step rule.

        Chosen so that the rule differentiates constants exactly,
        ``sum_{j<=n} d_j = n^(-order) / Gamma(1-order)``.
        """
        return -self.b[n - 1] + n ** (-self.order) / math.gamma(1.0 - self.order)


def build_weights(alpha: float, L: int) -> L1WeightTable:
    """Weights for the order ``1 - alpha`` derivative, indices ``0..L-1``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    order = 1.0 - alpha
    j = np.arange(L + 1, dtype=float)
    powers = j**alpha
    b = np.diff(powers) / math.gamma(1.0 + alpha)
    d = np.empty_like(b)
    d[0] = b[0]
    d[1:] = np.diff(b)
    b.setflags(write=False)
    d.setflags(write=False)
    return L1WeightTable(order, b, d)


def rl_apply(weights: L1WeightTable, history: Sequence, tau: float):
    """``tau^-order sum_{j<n} d_j u^(n-j)`` for ``history = [u^1, ..., u^n]``.

    The initial value is not part of ``history``, matching the solver.
    """
    hist = np.asarray(history, dtype=float)
    n = hist.shape[0] if hist.ndim else 0
    if n == 0:
        raise ValueError("history must contain at least one level")
    if n > weights.d.size:
        raise ValueError(f"history of length {n} exceeds the weight table ({weights.d.size})")
    coef = weights.d[:n][::-1]
    return tau ** (-weights.order) * np.tensordot(coef, hist, axes=(0, 0))


def rl_apply_full(weights: L1WeightTable, values: Sequence, tau: float):
    """Full L1 rule at ``t_n`` for ``values = [u^0, u^1, ..., u^n]``.

    Includes the initial-value term through :meth:`L1WeightTable.endpoint_weight`;
    used only as a consistency diagnostic.
    """
    vals = np.asarray(values, dtype=float)
    n = vals.shape[0] - 1
    if n < 1:
        raise ValueError("need at least u^0 and u^1")
    head = rl_apply(weights, vals[1:], tau)
    return head + tau ** (-weights.order) * weights.endpoint_weight(n) * vals[0]


@dataclass(frozen=True, eq=False)
class FieldPair:
    """Nodal coefficients of ``(G1, G2)`` at time level ``n``."""

    g1: np.ndarray
    g2: np.ndarray
    mesh: UniformMesh
    n: int
    t: float = float("nan")

    def __post_init__(self):
        if self.g1.shape != (self.mesh.n_dof,) or self.g2.shape != (self.mesh.n_dof,):
            raise ValueError("field lengths do not match the mesh")


@dataclass(frozen=True, eq=False)
class StepOperator:
    """Factored block matrix of one implicit step.

    ``coef1``/``coef2`` are ``tau^(alpha_i - 1)``; ``reaction1``/``reaction2``
    are the dense ``a M + A_i`` blocks applied to history sums.
    """

    params: SystemParams
    mesh: UniformMesh
    tau: float
    mass: MassMatrix
    w1: L1WeightTable
    w2: L1WeightTable
    coef1: float
    coef2: float
    reaction1: np.ndarray
    reaction2: np.ndarray
    block: np.ndarray
    lu: tuple

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return sla.lu_solve(self.lu, rhs)


def build_step_operator(
    params: SystemParams,
    stiffness: tuple[FracStiffness, FracStiffness],
    mass: MassMatrix,
    weights: tuple[L1WeightTable, L1WeightTable],
    tau: float,
) -> StepOperator:
    """Assemble and factor the time-independent ``2 n_dof`` step matrix."""
    S1, S2 = stiffness
    w1, w2 = weights
    mesh = mass.mesh
    if S1.mesh != mesh or S2.mesh != mesh:
        raise ValueError("stiffness and mass matrices live on different meshes")
    a = params.a
    Md = mass.toarray()
    c1 = tau ** (params.alpha1 - 1.0)
    c2 = tau ** (params.alpha2 - 1.0)
    R1 = a * Md + S1.toarray()
    R2 = a * Md + S2.toarray()
    n = mesh.n_dof
    block = np.empty((2 * n, 2 * n))
    block[:n, :n] = Md / tau + c1 * w1.d[0] * R1
    block[n:, n:] = Md / tau + c2 * w2.d[0] * R2
    block[:n, n:] = -a * c2 * w2.d[0] * Md
    block[n:, :n] = -a * c1 * w1.d[0] * Md
    try:
        lu = sla.lu_factor(block, check_finite=True)
    except (ValueError, sla.LinAlgError) as exc:
        raise np.linalg.LinAlgError(f"step matrix factorization failed: {exc}") from exc
    if np.any(np.diag(lu[0]) == 0.0):
        raise np.linalg.LinAlgError("step matrix is singular")
    return StepOperator(params, mesh, tau, mass, w1, w2, c1, c2, R1, R2, block, lu)


def _history_sum(d: np.ndarray, hist: np.ndarray, n: int) -> np.ndarray:
    # sum_{i=1}^{n-1} d_i G^(n-i), with hist[k] = G^k
    if n <= 1:
        return np.zeros(hist.shape[1])
    return d[n - 1 : 0 : -1] @ hist[1:n]


def _rhs(op: StepOperator, prev1, prev2, H1, H2) -> np.ndarray:
    a = op.params.a
    M = op.mass
    r1 = M @ prev1 / op.tau - op.coef1 * (op.reaction1 @ H1) + a * op.coef2 * (M @ H2)
    r2 = M @ prev2 / op.tau - op.coef2 * (op.reaction2 @ H2) + a * op.coef1 * (M @ H1)
    return np.concatenate((r1, r2))


def step(op: StepOperator, history1, history2, prev: FieldPair) -> FieldPair:
    """Advance from level ``prev.n`` to ``prev.n + 1``.

    ``history1``/``history2`` hold ``G^1..G^(n-1)`` of each field (empty when
    ``n = 1``); the history portions of the weighted sums move to the
    right-hand side.
    """
    n = prev.n + 1
    h1 = np.asarray(history1, dtype=float).reshape(-1, op.mesh.n_dof)
    h2 = np.asarray(history2, dtype=float).reshape(-1, op.mesh.n_dof)
    if h1.shape[0] != n - 1 or h2.shape[0] != n - 1:
        raise ValueError(f"step {n} needs {n - 1} history levels, got {h1.shape[0]} and {h2.shape[0]}")
    if prev.n > 0 and n - 1 > 0 and not (np.array_equal(h1[-1], prev.g1) and np.array_equal(h2[-1], prev.g2)):
        raise ValueError("history does not end with the previous level")
    if n > op.w1.d.size:
        raise ValueError(f"step {n} exceeds the weight tables (L={op.w1.d.size})")
    pad = np.zeros((1, op.mesh.n_dof))
    H1 = _history_sum(op.w1.d, np.vstack((pad, h1)), n)
    H2 = _history_sum(op.w2.d, np.vstack((pad, h2)), n)
    sol = op.solve(_rhs(op, prev.g1, prev.g2, H1, H2))
    m = op.mesh.n_dof
    return FieldPair(sol[:m], sol[m:], op.mesh, n, n * op.tau)


def _snapshot_indices(grid: TimeGrid, times) -> list[int]:
    idx = {grid.L}
    for t in times or ():
        idx.add(grid.index_of(t))
    return sorted(idx)


def solve_transient(
    params: SystemParams,
    mesh: UniformMesh,
    grid: TimeGrid,
    ic1,
    ic2,
    snapshot_times=None,
    stiffness: tuple[FracStiffness, FracStiffness] | None = None,
) -> list[FieldPair]:
    """March the fully discrete scheme over ``grid`` and return snapshots.

    Initial values are L2 projections of ``ic1``/``ic2``.  The final time
    is always among the returned snapshots.
    """
    validate(params)
    if stiffness is None:
        S1 = assemble_stiffness(mesh, params.s1)
        S2 = S1 if params.s2 == params.s1 else assemble_stiffness(mesh, params.s2)
        stiffness = (S1, S2)
    mass = assemble_mass(mesh)
    w1 = build_weights(params.alpha1, grid.L)
    w2 = build_weights(params.alpha2, grid.L)
    op = build_step_operator(params, stiffness, mass, (w1, w2), grid.tau)

    wanted = _snapshot_indices(grid, snapshot_times)
    m = mesh.n_dof
    hist1 = np.zeros((grid.L + 1, m))
    hist2 = np.zeros((grid.L + 1, m))
    hist1[0] = l2_project(ic1, mesh)
    hist2[0] = l2_project(ic2, mesh)

    out = []
    if wanted[0] == 0:
        out.append(FieldPair(hist1[0].copy(), hist2[0].copy(), mesh, 0, 0.0))
    for n in range(1, grid.L + 1):
        H1 = _history_sum(w1.d, hist1, n)
        H2 = _history_sum(w2.d, hist2, n)
        sol = op.solve(_rhs(op, hist1[n - 1], hist2[n - 1], H1, H2))
        if not np.all(np.isfinite(sol)):
            raise FloatingPointError(f"non-finite solution at step {n}")
        hist1[n] = sol[:m]
        hist2[n] = sol[m:]
        if n in wanted:
            out.append(FieldPair(hist1[n].copy(), hist2[n].copy(), mesh, n, n * grid.tau))
    return out


def solve_scalar(alpha: float, s: float, a: float, mesh: UniformMesh, grid: TimeGrid, ic) -> np.ndarray:
    """Single-field version of the scheme, final-time coefficients.

    Solves ``dG/dt + a D G + D A G = 0`` with the same discretisation; with
    ``a = 0`` it reproduces each field of the decoupled system.
    """
    S = assemble_stiffness(mesh, s)
    M = assemble_mass(mesh)
    w = build_weights(alpha, grid.L)
    tau = grid.tau
    c = tau ** (alpha - 1.0)
    R = a * M.toarray() + S.toarray()
    lu = sla.lu_factor(M.toarray() / tau + c * w.d[0] * R)
    hist = np.zeros((grid.L + 1, mesh.n_dof))
    hist[0] = l2_project(ic, mesh)
    for n in range(1, grid.L + 1):
        H = _history_sum(w.d, hist, n)
        hist[n] = sla.lu_solve(lu, M @ hist[n - 1] / tau - c * (R @ H))
    return hist[-1]
