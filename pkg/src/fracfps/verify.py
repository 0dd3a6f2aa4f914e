"""Independent oracles used to check the discretisation.

Nothing here calls the closed-form stiffness formulas; the stiffness oracle
integrates the defining double integral numerically, in difference
coordinates ``z = x - y``.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate
from scipy.special import roots_jacobi

from .fem import UniformMesh, fractional_constant
from .l1 import FieldPair, TimeGrid, solve_transient
from .model import SystemParams

__all__ = [
    "QuadratureSpec",
    "QuadResult",
    "QuadratureError",
    "quad_stiffness_entry",
    "exact_ball_solution",
    "ball_constant",
    "fractional_laplacian_at",
    "rl_monomial",
    "rl_numeric",
    "fine_reference",
    "l2_error",
]


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadratureSpec:
    rtol: float = 1e-8
    max_depth: int = 60
    points: int = 8
    max_panels: int = 4000

    def __post_init__(self):
        if not self.rtol > 0:
            raise ValueError("rtol must be positive")
        if self.points < 2 or self.max_panels < 1:
            raise ValueError("need at least 2 points and 1 panel")


class QuadResult(NamedTuple):
    value: float
    error: float
    converged: bool


_GAUSS3 = np.polynomial.legendre.leggauss(3)


def _hat(x, center, h):
    return np.maximum(0.0, 1.0 - np.abs(x - center) / h)


def _difference_correlation(z, xi, xj, h):
    """g(z) = int (phi_i(x) - phi_i(x-z)) (phi_j(x) - phi_j(x-z)) dx for an array of z.

    The integrand is piecewise quadratic in x; splitting at every kink and
    using three Gauss points per piece integrates it exactly.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    base = np.array([xi - h, xi, xi + h, xj - h, xj, xj + h])
    br = np.sort(np.concatenate((np.broadcast_to(base, (z.size, 6)), base[None, :] + z[:, None]), axis=1), axis=1)
    lo, hi = br[:, :-1], br[:, 1:]
    t, w = _GAUSS3
    mid = 0.5 * (lo + hi)[..., None]
    half = 0.5 * (hi - lo)[..., None]
    x = mid + half * t
    zz = z[:, None, None]
    f = (_hat(x, xi, h) - _hat(x - zz, xi, h)) * (_hat(x, xj, h) - _hat(x - zz, xj, h))
    return np.sum(f * w * half, axis=(1, 2))


def quad_stiffness_entry(i: int, j: int, mesh: UniformMesh, s: float, spec: QuadratureSpec | None = None,
                         strict: bool = True) -> QuadResult:
    """Globally adaptive quadrature of the stiffness entry for hats ``i`` and ``j``.

    ``i`` and ``j`` are interior node indices in ``1..n_dof``.  The value is
    ``c_{1,s} int_0^inf z^(-1-2s) g(z) dz``; panels start at the kinks
    ``z = m h`` and the panel with the largest error estimate (difference of
    n- and 2n-point Gauss rules) is bisected until the summed estimate drops
    below ``rtol`` times the value.
    """
    spec = spec or QuadratureSpec()
    if not (1 <= i <= mesh.n_dof and 1 <= j <= mesh.n_dof):
        raise IndexError(f"indices ({i}, {j}) outside 1..{mesh.n_dof}")
    h = mesh.h
    xi, xj = i * h, j * h
    span = abs(i - j) + 2
    zmax = span * h
    tn, wn = np.polynomial.legendre.leggauss(spec.points)
    t2, w2 = np.polynomial.legendre.leggauss(2 * spec.points)

    # g(z) = O(z^2) at the origin, so panels starting at z = 0 use a
    # Gauss-Jacobi rule for the weight z^(1-2s) applied to g(z)/z^2
    beta = 1.0 - 2.0 * s
    jn = roots_jacobi(spec.points, 0.0, beta)
    j2 = roots_jacobi(2 * spec.points, 0.0, beta)

    def rule(a, b, t, w):
        z = 0.5 * (a + b) + 0.5 * (b - a) * t
        return 0.5 * (b - a) * np.sum(w * z ** (-1.0 - 2.0 * s) * _difference_correlation(z, xi, xj, h))

    def origin_rule(b, t, w):
        z = 0.5 * b * (t + 1.0)
        return (0.5 * b) ** (1.0 + beta) * np.sum(w * _difference_correlation(z, xi, xj, h) / z**2)

    def panel(a, b, depth):
        if a == 0.0:
            coarse = origin_rule(b, *jn)
            fine = origin_rule(b, *j2)
        else:
            coarse = rule(a, b, tn, wn)
            fine = rule(a, b, t2, w2)
        return (-abs(fine - coarse), a, b, fine, depth)

    heap = [panel(m * h, (m + 1) * h, 0) for m in range(span)]
    heapq.heapify(heap)
    count = len(heap)
    while True:
        total = sum(p[3] for p in heap)
        err = -sum(p[0] for p in heap)
        mass = 2.0 * h / 3.0 if i == j else (h / 6.0 if abs(i - j) == 1 else 0.0)
        tail = 2.0 * mass * zmax ** (-2.0 * s) / (2.0 * s)
        value = total + tail
        floor = 1e-14 * (sum(abs(p[3]) for p in heap) + abs(tail))
        if err <= spec.rtol * abs(value) or count >= spec.max_panels or heap[0][4] >= spec.max_depth:
            break
        _, a, b, _, depth = heapq.heappop(heap)
        m = 0.5 * (a + b)
        heapq.heappush(heap, panel(a, m, depth + 1))
        heapq.heappush(heap, panel(m, b, depth + 1))
        count += 1
    converged = err <= spec.rtol * abs(value)
    c = fractional_constant(s)
    result = QuadResult(c * value, c * (err + floor), converged)
    if strict and not converged:
        raise QuadratureError(f"entry ({i}, {j}) s={s}: error {err:.3e} above tolerance after {count} panels")
    return result


# -- steady exact solution ----------------------------------------------------


def ball_constant(s: float) -> float:
    """kappa_s = 4^-s sqrt(pi) / (Gamma(s + 1/2) Gamma(1 + s))."""
    return 4.0 ** (-s) * math.sqrt(math.pi) / (math.gamma(s + 0.5) * math.gamma(1.0 + s))


def exact_ball_solution(s: float) -> Callable:
    """Solution of ``(-Delta)^s u = 1`` on (0, 1) with ``u = 0`` outside."""
    if not 0.0 < s <= 1.0:
        raise ValueError(f"s must lie in (0, 1], got {s}")
    kappa = ball_constant(s)

    def u(x):
        x = np.asarray(x, dtype=float)
        inside = np.clip(x * (1.0 - x), 0.0, None)
        return kappa * inside**s

    u.s = s
    return u


def fractional_laplacian_at(u: Callable, x0: float, s: float, eps: float = 1e-3) -> float:
    """Principal-value evaluation of ``(-Delta)^s u(x0)`` for ``u`` supported in [0, 1].

    Symmetric excision of radius ``eps`` and ``eps/2`` followed by Richardson
    extrapolation of the ``eps**(2-2s)`` remainder.
    """
    u0 = float(u(x0))
    near, far = sorted((x0, 1.0 - x0))

    def second_diff(z):
        return (2.0 * u0 - float(u(x0 + z)) - float(u(x0 - z))) * z ** (-1.0 - 2.0 * s)

    def excised(e):
        val = 0.0
        for a, b in ((e, near), (near, far)):
            if b > a:
                val += integrate.quad(second_diff, a, b, limit=400, epsabs=1e-13, epsrel=1e-12)[0]
        return val + 2.0 * u0 * far ** (-2.0 * s) / (2.0 * s)

    p = 2.0 - 2.0 * s
    i1, i2 = excised(eps), excised(eps / 2.0)
    extrap = (2.0**p * i2 - i1) / (2.0**p - 1.0)
    return fractional_constant(s) * extrap


# -- fractional derivatives of monomials -------------------------------------


def rl_monomial(alpha: float, beta: float, t):
    """Order-``alpha`` Riemann-Liouville derivative of ``t**beta``."""
    if not beta > -1.0:
        raise ValueError("beta must exceed -1")
    t = np.asarray(t, dtype=float)
    return math.gamma(beta + 1.0) / math.gamma(beta + 1.0 - alpha) * t ** (beta - alpha)


def rl_numeric(f: Callable[[float], float], alpha: float, t: float, dt: float = 1e-4) -> float:
    """Riemann-Liouville derivative from its definition by quadrature and a central difference."""

    def convolution(tt):
        val, _ = integrate.quad(f, 0.0, tt, weight="alg", wvar=(0.0, -alpha), epsabs=1e-14, epsrel=1e-13, limit=200)
        # the 'alg' weight is (x-0)^0 (tt-x)^-alpha
        return val / math.gamma(1.0 - alpha)

    return (convolution(t + dt) - convolution(t - dt)) / (2.0 * dt)


# -- temporal reference -------------------------------------------------------


def fine_reference(params: SystemParams, mesh: UniformMesh, grid: TimeGrid, ic1, ic2, r: int = 8,
                   stiffness=None) -> FieldPair:
    """Final-time solution with the step refined ``r`` times on the same mesh."""
    if r not in (1, 2, 4, 8):
        raise ValueError(f"refinement factor must be 1, 2, 4 or 8, got {r}")
    fine = TimeGrid(grid.tau / r, grid.L * r)
    return solve_transient(params, mesh, fine, ic1, ic2, stiffness=stiffness)[-1]


# -- errors against closed-form profiles --------------------------------------


def l2_error(u: Callable, coeffs, mesh: UniformMesh, points: int = 10, grading: int = 40) -> float:
    """L2 distance between ``u`` and the P1 function with interior values ``coeffs``.

    Cells are integrated with Gauss rules; the two boundary cells are split
    geometrically toward the endpoint so that ``x**s`` behaviour is resolved.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    vals = np.concatenate(([0.0], coeffs, [0.0]))
    h = mesh.h
    t, w = np.polynomial.legendre.leggauss(points)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w

    # interior cells, vectorised
    left = np.arange(1, mesh.n_cells - 1) * h
    x = left[:, None] + h * t[None, :]
    uh = vals[1:-2, None] * (1.0 - t[None, :]) + vals[2:-1, None] * t[None, :]
    total = float(np.sum((u(x) - uh) ** 2 * w[None, :]) * h)

    # boundary cells: geometric panels [h 2^-(m+1), h 2^-m]
    edges = h * 2.0 ** -np.arange(grading + 1)[::-1]
    edges = np.concatenate(([0.0], edges))
    for a, b in zip(edges[:-1], edges[1:]):
        r = a + (b - a) * t
        for xs, slope in ((r, vals[1] / h), (1.0 - r, vals[-2] / h)):
            uh = slope * r
            total += float(np.sum((u(xs) - uh) ** 2 * w) * (b - a))
    return math.sqrt(total)
