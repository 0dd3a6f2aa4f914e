"""Piecewise-linear finite elements for the integral fractional Laplacian on (0, 1).

The energy form of ``(-Delta)^s`` with zero exterior data is

    <u, v>_s = (c_{1,s} / 2) * iint_{R x R} (u(x)-u(y)) (v(x)-v(y)) / |x-y|^(1+2s) dx dy

with ``u, v`` extended by zero outside (0, 1), so that ``<u, v>_s`` equals
``((-Delta)^s u, v)``.  On a uniform mesh the hat functions are translates
of one another on the whole line, hence the stiffness matrix is symmetric
Toeplitz and only its first row is assembled.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
from scipy.special import roots_jacobi

from .model import Characteristic, Nodal, PowerLeft, PowerRight, Zero, ParameterError

__all__ = [
    "UniformMesh",
    "FracStiffness",
    "MassMatrix",
    "fractional_constant",
    "assemble_stiffness",
    "assemble_mass",
    "l2_project",
    "load_vector",
    "l2_norm",
    "prolongate",
    "dirichlet_solve",
    "dump_stiffness",
    "load_stiffness",
    "CONVENTION",
]

CONVENTION = "half-fullplane"

# |1 - 2s| below this uses the logarithmic limit of the Riesz kernel.
_LOG_BRANCH = 1e-9
# First offset evaluated through the asymptotic series instead of the
# direct fourth difference (which cancels like k**4).
_SERIES_FROM = 3
_FOURTH_DIFF = np.array([1.0, -4.0, 6.0, -4.0, 1.0])


@dataclass(frozen=True)
class UniformMesh:
    """Uniform partition of (0, 1) into ``n_cells`` cells.

    Only the ``n_cells - 1`` interior nodes carry unknowns.
    """

    n_cells: int

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 2:
            raise ValueError(f"n_cells must be an integer >= 2, got {self.n_cells}")
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def h(self) -> float:
        return 1.0 / self.n_cells

    @property
    def n_dof(self) -> int:
        return self.n_cells - 1

    @property
    def nodes(self) -> np.ndarray:
        """Interior node coordinates ``i*h``, ``i = 1..n_dof``."""
        return np.arange(1, self.n_cells) / self.n_cells

    def refined(self, factor: int = 2) -> "UniformMesh":
        return UniformMesh(self.n_cells * factor)


def fractional_constant(s: float) -> float:
    """Normalising constant ``c_{1,s} = 4^s s Gamma(1/2+s) / (sqrt(pi) Gamma(1-s))``."""
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    return 4.0**s * s * math.gamma(0.5 + s) / (math.sqrt(math.pi) * math.gamma(1.0 - s))


@dataclass(frozen=True, eq=False)
class FracStiffness:
    """Symmetric Toeplitz stiffness matrix ``<phi_i, phi_j>_s``.

    ``first_row[k]`` is the entry for index offset ``k``.
    """

    s: float
    mesh: UniformMesh
    first_row: np.ndarray
    convention_factor: float

    @property
    def shape(self):
        return (self.mesh.n_dof, self.mesh.n_dof)

    def entry(self, i: int, j: int) -> float:
        return float(self.first_row[abs(i - j)])

    def toarray(self) -> np.ndarray:
        return sla.toeplitz(self.first_row)

    def __matmul__(self, v):
        return self.dense @ v

    @cached_property
    def dense(self) -> np.ndarray:
        return self.toarray()


@dataclass(frozen=True)
class MassMatrix:
    """Tridiagonal P1 mass matrix, entries ``h/6 * [1, 4, 1]``."""

    mesh: UniformMesh

    @property
    def diag(self) -> float:
        return 2.0 * self.mesh.h / 3.0

    @property
    def off(self) -> float:
        return self.mesh.h / 6.0

    def toarray(self) -> np.ndarray:
        n = self.mesh.n_dof
        return (
            np.diag(np.full(n, self.diag))
            + np.diag(np.full(n - 1, self.off), 1)
            + np.diag(np.full(n - 1, self.off), -1)
        )

    def __matmul__(self, v):
        v = np.asarray(v, dtype=float)
        out = self.diag * v
        out[1:] += self.off * v[:-1]
        out[:-1] += self.off * v[1:]
        return out

    def solve(self, b) -> np.ndarray:
        n = self.mesh.n_dof
        ab = np.empty((3, n))
        ab[0] = self.off
        ab[1] = self.diag
        ab[2] = self.off
        return sla.solve_banded((1, 1), ab, np.asarray(b, dtype=float))


def assemble_mass(mesh: UniformMesh) -> MassMatrix:
    return MassMatrix(mesh)


# -- closed-form stiffness ----------------------------------------------------
#
# For hats on a uniform mesh of width h,
#     <phi_0, phi_k>_s = ((-Delta)^s Lambda)(kh),
# where Lambda is the autocorrelation of the hat, i.e. h times the centred
# cubic B-spline at x/h.  Writing (-Delta)^s = R * d^4/dx^4 with R the Riesz
# kernel of order 4-2s turns the entry into a fourth central difference:
#     a_k = h^(1-2s) sum_j w_j K(k + j),   w = (1, -4, 6, -4, 1),
#     K(x) = |x|^(3-2s) / (2 Gamma(4-2s) cos(pi s)).
# Since w annihilates x**2 we use K(x) - x**2/(...) which stays finite as
# s -> 1/2 and tends to x**2 log|x| / (2 pi).


def _riesz_profile(x, s):
    """Riesz kernel with its quadratic part removed, finite for all s in (0, 1)."""
    delta = 1.0 - 2.0 * s
    x = np.abs(np.asarray(x, dtype=float))
    out = np.zeros_like(x)
    pos = x > 0
    logx = np.log(x[pos])
    if abs(delta) < _LOG_BRANCH:
        # expm1(d L)/d to second order; the neglected term is O(d^2 L^3).
        ratio = logx * (1.0 + 0.5 * delta * logx)
    else:
        ratio = np.expm1(delta * logx) / delta
    scale = 1.0 / (math.gamma(3.0 + delta) * math.pi * np.sinc(delta / 2.0))
    out[pos] = x[pos] ** 2 * ratio * scale
    return out


def _fourth_difference_series(k, s, terms=200):
    """Large-offset evaluation of the fourth difference of the Riesz kernel.

    Uses sum_j w_j (k+j)^p = k^p sum_{n even >= 4} binom(p, n) (2^(n+1) - 8) k^-n,
    with the vanishing factor (p - 2) divided out against cos(pi s).
    """
    k = np.asarray(k, dtype=float)
    delta = 1.0 - 2.0 * s
    p = 3.0 - 2.0 * s
    total = np.zeros_like(k)
    inv_k2 = 1.0 / k**2
    # R_n = prod_{m < n, m != 2} (p - m) / n!
    coef = p * (p - 1.0) * (p - 3.0) / 24.0
    kpow = inv_k2 * inv_k2
    n = 4
    for _ in range(terms):
        term = coef * (2.0 ** (n + 1) - 8.0) * kpow
        total += term
        if np.all(np.abs(term) <= 1e-18 * np.abs(total)):
            break
        coef *= (p - n) * (p - n - 1.0) / ((n + 1.0) * (n + 2.0))
        kpow = kpow * inv_k2
        n += 2
    return k**p * total / (math.gamma(p + 1.0) * math.pi * np.sinc(delta / 2.0))


def _closed_form_row(n_dof: int, s: float) -> np.ndarray:
    k = np.arange(n_dof)
    out = np.empty(n_dof, dtype=float)
    near = k < _SERIES_FROM
    kn = k[near]
    pts = kn[:, None] + np.arange(-2, 3)[None, :]
    out[near] = _riesz_profile(pts, s) @ _FOURTH_DIFF
    if np.any(~near):
        out[~near] = _fourth_difference_series(k[~near], s)
    return out


def _quadrature_entry(i, j, mesh, s, order=16):
    """Cell-pair Gauss quadrature for one entry, Duffy splitting at touching cells.

    The double integral is split into Omega x Omega plus the exterior part,
    which reduces to a one-dimensional weighted integral
        2 int_Omega phi_i phi_j (x^-2s + (1-x)^-2s) / (2s) dx.
    """
    h = mesh.h
    n = mesh.n_cells
    xg, wg = np.polynomial.legendre.leggauss(order)
    xg = 0.5 * (xg + 1.0)
    wg = 0.5 * wg

    def hat(idx, x):
        return np.maximum(0.0, 1.0 - np.abs(x / h - idx))

    def slope(idx, cell):
        # derivative of phi_idx on cell [cell*h, (cell+1)*h]
        if cell == idx - 1:
            return 1.0 / h
        if cell == idx:
            return -1.0 / h
        return 0.0

    support = {i - 1, i, j - 1, j}
    total = 0.0
    for p in range(n):
        for q in range(p, n):
            if p not in support and q not in support:
                continue
            mult = 1.0 if p == q else 2.0
            if p == q:
                # phi(x) - phi(y) = phi' (x - y) on a single cell
                val = slope(i, p) * slope(j, p) * 2.0 * h ** (3 - 2 * s) / ((2 - 2 * s) * (3 - 2 * s))
            elif q == p + 1:
                # shared vertex v: x = v - h u, y = v + h w, Duffy in each triangle
                ip, iq = slope(i, p), slope(i, q)
                jp, jq = slope(j, p), slope(j, q)
                # phi(x) - phi(y) = -h (u phi'_P + w phi'_Q); the radial factor
                # rho^(2-2s) integrates exactly
                radial = 1.0 / (3.0 - 2.0 * s)
                eta = xg
                val = 0.0
                for u_coef, w_coef in ((np.ones_like(eta), eta), (eta, np.ones_like(eta))):
                    di = -h * (u_coef * ip + w_coef * iq)
                    dj = -h * (u_coef * jp + w_coef * jq)
                    kern = (h * (u_coef + w_coef)) ** (-1 - 2 * s)
                    val += np.sum(wg * di * dj * kern) * radial * h * h
            else:
                x = p * h + h * xg
                y = q * h + h * xg
                X, Y = np.meshgrid(x, y, indexing="ij")
                W = np.outer(wg, wg) * h * h
                F = (hat(i, X) - hat(i, Y)) * (hat(j, X) - hat(j, Y)) * np.abs(X - Y) ** (-1 - 2 * s)
                val = np.sum(W * F)
            total += mult * val

    # exterior interaction; at the ends phi_i phi_j vanishes like r**2, which is
    # folded into a Gauss-Jacobi weight r**(2-2s)
    ext = 0.0
    tj, wj = roots_jacobi(order, 0.0, 2.0 - 2.0 * s)
    r = 0.5 * (tj + 1.0) * h
    wr = wj * (0.5 * h) ** (3.0 - 2.0 * s)
    x = None
    for p in {i - 1, i} & {j - 1, j}:
        x = p * h + h * xg
        if p == 0:
            ext += np.sum(wr * hat(i, r) * hat(j, r) / r**2)
            ext += np.sum(wg * h * hat(i, x) * hat(j, x) * (1.0 - x) ** (-2 * s))
        if p == n - 1:
            ext += np.sum(wr * hat(i, 1.0 - r) * hat(j, 1.0 - r) / r**2)
            ext += np.sum(wg * h * hat(i, x) * hat(j, x) * x ** (-2 * s))
        if 0 < p < n - 1:
            ext += np.sum(wg * h * hat(i, x) * hat(j, x) * (x ** (-2 * s) + (1.0 - x) ** (-2 * s)))
    total += 2.0 * ext / (2.0 * s)
    return 0.5 * fractional_constant(s) * total


def assemble_stiffness(mesh: UniformMesh, s: float, backend: str = "closed") -> FracStiffness:
    """Assemble the fractional stiffness matrix on ``mesh``.

    Parameters
    ----------
    backend : {"closed", "quadrature"}
        ``"closed"`` evaluates exact antiderivative formulas; ``"quadrature"``
        integrates cell pairs with Gauss rules (Duffy splitting where cells
        touch).  The latter is meant for cross-checks on small meshes.
    """
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    factor = 0.5 * fractional_constant(s)
    if backend == "closed":
        row = mesh.h ** (1.0 - 2.0 * s) * _closed_form_row(mesh.n_dof, s)
    elif backend == "quadrature":
        row = np.array([_quadrature_entry(1, 1 + k, mesh, s) for k in range(mesh.n_dof)])
        if not np.all(np.isfinite(row)):
            bad = int(np.flatnonzero(~np.isfinite(row))[0])
            raise FloatingPointError(f"quadrature did not converge at offset k={bad}")
    else:
        raise ValueError(f"unknown backend {backend!r}")
    row.setflags(write=False)
    return FracStiffness(float(s), mesh, row, factor)


# -- dump format --------------------------------------------------------------


def dump_stiffness(stiff: FracStiffness, fh=None) -> str:
    """Write ``# s=.. n_cells=.. convention=..`` then ``k<TAB>a_k`` lines."""
    buf = io.StringIO()
    buf.write(f"# s={stiff.s!r} n_cells={stiff.mesh.n_cells} convention={CONVENTION}\n")
    for k, a in enumerate(stiff.first_row):
        buf.write(f"{k}\t{float(a)!r}\n")
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def load_stiffness(text: str) -> FracStiffness:
    """Inverse of :func:`dump_stiffness`."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = dict(tok.split("=", 1) for tok in lines[0].lstrip("#").split())
    if header.get("convention") != CONVENTION:
        raise ValueError(f"unsupported convention {header.get('convention')!r}")
    s = float(header["s"])
    mesh = UniformMesh(int(header["n_cells"]))
    row = np.empty(mesh.n_dof)
    seen = 0
    for ln in lines[1:]:
        k, val = ln.split("\t")
        row[int(k)] = float(val)
        seen += 1
    if seen != mesh.n_dof:
        raise ValueError(f"expected {mesh.n_dof} offsets, found {seen}")
    row.setflags(write=False)
    return FracStiffness(s, mesh, row, 0.5 * fractional_constant(s))


# -- projection and norms -----------------------------------------------------


def _power_moments(lo, hi, nu):
    """Integrals of x**-nu and x**(1-nu) over [lo, hi], elementwise."""
    e0 = 1.0 - nu
    e1 = 2.0 - nu
    m0 = (hi**e0 - lo**e0) / e0
    m1 = (hi**e1 - lo**e1) / e1
    return m0, m1


def _power_right_load(mesh: UniformMesh, nu: float) -> np.ndarray:
    """b_i = int x^-nu phi_i dx via power-rule antiderivatives on each half-hat."""
    h = mesh.h
    i = np.arange(1, mesh.n_cells)
    xl, xc, xr = (i - 1) * h, i * h, (i + 1) * h
    m0, m1 = _power_moments(xl, xc, nu)
    rising = (m1 - xl * m0) / h
    m0, m1 = _power_moments(xc, xr, nu)
    falling = (xr * m0 - m1) / h
    return rising + falling


def _characteristic_load(mesh: UniformMesh, lo: float, hi: float) -> np.ndarray:
    h = mesh.h
    i = np.arange(1, mesh.n_cells)
    xl, xc, xr = (i - 1) * h, i * h, (i + 1) * h

    def piece(a, b, anchor, sign):
        # int_a^b sign*(x - anchor)/h dx over a clipped interval
        a = np.clip(a, lo, hi)
        b = np.clip(b, lo, hi)
        return sign * ((b - anchor) ** 2 - (a - anchor) ** 2) / (2.0 * h)

    return piece(xl, xc, xl, 1.0) + piece(xc, xr, xr, -1.0)


def load_vector(f, mesh: UniformMesh) -> np.ndarray:
    """Exact load ``b_i = int_0^1 f phi_i dx`` for the closed-form datum families."""
    if isinstance(f, Characteristic):
        return _characteristic_load(mesh, f.lo, f.hi)
    if isinstance(f, PowerRight):
        return _power_right_load(mesh, f.nu)
    if isinstance(f, PowerLeft):
        # (1-x)^-nu against phi_i equals x^-nu against phi_{n-i}
        return _power_right_load(mesh, f.nu)[::-1].copy()
    if isinstance(f, Zero):
        return np.zeros(mesh.n_dof)
    raise TypeError(f"no closed-form load for {type(f).__name__}")


def l2_project(f, mesh: UniformMesh) -> np.ndarray:
    """Coefficients of the L2-orthogonal projection of ``f`` onto the P1 space."""
    if isinstance(f, Nodal):
        if f.values.shape != (mesh.n_dof,):
            raise ValueError(f"nodal datum has {f.values.size} values, mesh has {mesh.n_dof} dofs")
        return f.values.copy()
    if isinstance(f, (PowerLeft, PowerRight)) and not f.nu < 0.5:
        raise ParameterError([("nu", f"must be < 1/2, got {f.nu}")])
    return assemble_mass(mesh).solve(load_vector(f, mesh))


def l2_norm(v, mesh: UniformMesh) -> float:
    """Exact L2 norm ``sqrt(v^T M v)`` of the P1 function with nodal values ``v``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (mesh.n_dof,):
        raise ValueError(f"vector of length {v.size} does not match n_dof={mesh.n_dof}")
    return math.sqrt(max(float(v @ (assemble_mass(mesh) @ v)), 0.0))


def prolongate(coarse) -> np.ndarray:
    """Embed a P1 function into the uniformly refined mesh (half the cell width)."""
    coarse = np.asarray(coarse, dtype=float)
    padded = np.concatenate(([0.0], coarse, [0.0]))
    fine = np.empty(2 * padded.size - 1)
    fine[::2] = padded
    fine[1::2] = 0.5 * (padded[:-1] + padded[1:])
    return fine[1:-1]


def prolongate_to(coarse, mesh_from: UniformMesh, mesh_to: UniformMesh) -> np.ndarray:
    """Repeated :func:`prolongate` between nested meshes differing by a power of two."""
    ratio, rem = divmod(mesh_to.n_cells, mesh_from.n_cells)
    if rem or ratio < 1 or ratio & (ratio - 1):
        raise ValueError(f"meshes {mesh_from.n_cells} -> {mesh_to.n_cells} are not dyadically nested")
    v = np.asarray(coarse, dtype=float)
    if v.shape != (mesh_from.n_dof,):
        raise ValueError("vector does not match the coarse mesh")
    while ratio > 1:
        v = prolongate(v)
        ratio //= 2
    return v


def dirichlet_solve(s: float, constant_load: float, mesh: UniformMesh, stiffness=None) -> np.ndarray:
    """Galerkin solution of ``(-Delta)^s u = constant_load`` on (0, 1), ``u = 0`` outside."""
    A = stiffness if stiffness is not None else assemble_stiffness(mesh, s)
    b = np.full(mesh.n_dof, constant_load * mesh.h)
    c, low = sla.cho_factor(A.toarray())
    return sla.cho_solve((c, low), b)
