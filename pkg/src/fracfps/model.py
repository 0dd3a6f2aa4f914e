"""Model parameters and initial-condition descriptions for the two-state system.

The coupled system on the unit interval reads

    dG1/dt + a D1 G1 + D1 A1 G1 = a D2 G2
    dG2/dt + a D2 G2 + D2 A2 G2 = a D1 G1

with ``Di`` the Riemann-Liouville derivative of order ``1 - alpha_i`` and
``Ai`` the integral fractional Laplacian of order ``s_i`` with zero exterior
data.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "SystemParams",
    "ParameterError",
    "Characteristic",
    "PowerLeft",
    "PowerRight",
    "Nodal",
    "Zero",
    "InitialCondition",
    "coupling_from_m",
    "check_params",
    "validate",
    "parse_ic",
    "NU_PRESET_CAP",
]

# Largest exponent used by the reference experiments; anything above it is
# still in L2 but makes the endpoint load integrals nearly singular.
NU_PRESET_CAP = 0.4999


class ParameterError(ValueError):
    """Raised when model parameters violate their invariants.

    ``problems`` lists one ``(field, message)`` pair per violation.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        msg = "; ".join(f"{name}: {why}" for name, why in self.problems)
        super().__init__(msg)


def coupling_from_m(m: float) -> float:
    """Coupling coefficient ``a = (1 - m) / (2m - 1)`` of a two-state chain.

    ``m`` is the probability of staying in the current state, so the
    transition matrix is ``[[m, 1-m], [1-m, m]]``; it is singular at 1/2.
    """
    m = float(m)
    if not 0.0 <= m <= 1.0:
        raise ParameterError([("m", f"must lie in [0, 1], got {m}")])
    if m == 0.5:
        raise ParameterError([("m", "m = 1/2 makes the transition matrix singular")])
    return (1.0 - m) / (2.0 * m - 1.0)


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters of the two-state system on (0, 1).

    ``a`` is the primary coupling quantity; ``m`` is optional metadata and,
    when given, must reproduce ``a`` through :func:`coupling_from_m`.
    Construction does not validate; call :func:`validate`.
    """

    alpha1: float
    alpha2: float
    s1: float
    s2: float
    a: float
    T: float = 1.0
    m: float | None = None

    @classmethod
    def from_m(cls, alpha1, alpha2, s1, s2, m, T=1.0):
        return cls(alpha1, alpha2, s1, s2, coupling_from_m(m), T, m)

    def swapped(self) -> "SystemParams":
        """Parameters with the two internal states exchanged."""
        return SystemParams(self.alpha2, self.alpha1, self.s2, self.s1, self.a, self.T, self.m)


def check_params(params: SystemParams) -> list[tuple[str, str]]:
    """Return the list of violated invariants as ``(field, message)`` pairs."""
    problems = []
    for name in ("alpha1", "alpha2", "s1", "s2"):
        v = getattr(params, name)
        if not (isinstance(v, (int, float)) and 0.0 < v < 1.0):
            problems.append((name, f"must lie in the open interval (0, 1), got {v}"))
    if not (isinstance(params.T, (int, float)) and params.T > 0 and math.isfinite(params.T)):
        problems.append(("T", f"must be positive and finite, got {params.T}"))
    if not (isinstance(params.a, (int, float)) and math.isfinite(params.a)):
        problems.append(("a", f"must be a finite real, got {params.a}"))
    if params.m is not None:
        m = params.m
        if not 0.0 <= m <= 1.0:
            problems.append(("m", f"must lie in [0, 1], got {m}"))
        elif m == 0.5:
            problems.append(("m", "m = 1/2 makes the transition matrix singular"))
        elif params.a != (1.0 - m) / (2.0 * m - 1.0):
            problems.append(("a", f"a={params.a} does not equal (1-m)/(2m-1) for m={m}"))
    return problems


def validate(params: SystemParams) -> SystemParams:
    """Return ``params`` unchanged if every invariant holds.

    Raises
    ------
    ParameterError
        Carrying every violated invariant, not just the first.
    """
    problems = check_params(params)
    if problems:
        raise ParameterError(problems)
    return params


# -- initial conditions -------------------------------------------------------


@dataclass(frozen=True)
class Characteristic:
    """Indicator function of the interval ``(lo, hi)``."""

    lo: float
    hi: float

    def __post_init__(self):
        if not 0.0 <= self.lo < self.hi <= 1.0:
            raise ParameterError([("ic", f"need 0 <= lo < hi <= 1, got ({self.lo}, {self.hi})")])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return ((x > self.lo) & (x < self.hi)).astype(float)


def _check_nu(nu):
    if not nu < 0.5:
        raise ParameterError([("nu", f"power exponent must be < 1/2 for an L2 datum, got {nu}")])
    if nu > NU_PRESET_CAP:
        warnings.warn(
            f"nu={nu} exceeds {NU_PRESET_CAP}; endpoint load integrals become severe",
            RuntimeWarning,
            stacklevel=3,
        )


@dataclass(frozen=True)
class PowerRight:
    """The function ``x**(-nu)``, singular at x = 0 when nu > 0."""

    nu: float

    def __post_init__(self):
        _check_nu(self.nu)

    def __call__(self, x):
        return np.asarray(x, dtype=float) ** (-self.nu)


@dataclass(frozen=True)
class PowerLeft:
    """The function ``(1 - x)**(-nu)``, singular at x = 1 when nu > 0."""

    nu: float

    def __post_init__(self):
        _check_nu(self.nu)

    def __call__(self, x):
        return (1.0 - np.asarray(x, dtype=float)) ** (-self.nu)


@dataclass(frozen=True)
class Nodal:
    """A member of the finite element space given by its interior nodal values."""

    values: np.ndarray = field(compare=False)

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float).copy())


@dataclass(frozen=True)
class Zero:
    """The zero datum."""

    def __call__(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))


InitialCondition = Union[Characteristic, PowerLeft, PowerRight, Nodal, Zero]


def parse_ic(text: str) -> InitialCondition:
    """Parse the initial-condition mini-language.

    ``chi:<lo>:<hi>``, ``powL:<nu>`` for ``(1-x)**-nu``, ``powR:<nu>`` for
    ``x**-nu``, and ``zero`` for the zero datum.
    """
    parts = text.strip().split(":")
    kind = parts[0].lower()
    try:
        if kind == "chi" and len(parts) == 3:
            return Characteristic(float(parts[1]), float(parts[2]))
        if kind == "powl" and len(parts) == 2:
            return PowerLeft(float(parts[1]))
        if kind == "powr" and len(parts) == 2:
            return PowerRight(float(parts[1]))
    except ValueError as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ParameterError([("ic", f"cannot parse {text!r}: {exc}")]) from None
    if kind == "zero" and len(parts) == 1:
        return Zero()
    raise ParameterError([("ic", f"unrecognised initial condition {text!r}")])


