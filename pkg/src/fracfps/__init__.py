"""Finite element / L1 solver for the two-state space-time fractional Fokker-Planck system on (0, 1)."""

__version__ = "0.1.0"

from .model import SystemParams, ParameterError, validate, parse_ic  # noqa: E402
from .fem import UniformMesh, assemble_stiffness, assemble_mass  # noqa: E402
from .l1 import TimeGrid, solve_transient  # noqa: E402

__all__ = [
    "SystemParams",
    "ParameterError",
    "validate",
    "parse_ic",
    "UniformMesh",
    "assemble_stiffness",
    "assemble_mass",
    "TimeGrid",
    "solve_transient",
]
