"""Refinement studies: successive-mesh and successive-step errors with observed rates.

A spatial level ``N`` compares the solutions on ``1/h = N`` and ``1/h = 2N``
(coarse prolongated onto the fine mesh); a temporal level ``N`` compares
``tau = T/N`` with ``tau/2`` on one mesh.  Rates are log2 quotients of
consecutive errors and are attached to the finer level.
"""
from __future__ import annotations

import hashlib
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .fem import UniformMesh, assemble_stiffness, dirichlet_solve, l2_norm, prolongate_to
from .l1 import TimeGrid, solve_transient
from .model import Characteristic, InitialCondition, Nodal, PowerLeft, PowerRight, SystemParams, validate
from .verify import exact_ball_solution, l2_error

__all__ = [
    "StudyConfig",
    "ConvergenceReport",
    "TablePreset",
    "SolveCache",
    "spatial_study",
    "temporal_study",
    "run_study",
    "preset",
    "dirichlet_study",
    "observed_rates",
    "REFERENCE_RATES",
    "REFERENCE_ERRORS",
]

_CACHE_VERSION = 1


@dataclass(frozen=True)
class StudyConfig:
    """One row of a refinement study.

    ``levels`` are ``1/h`` values for the space axis or ``1/tau`` values for
    the time axis; each must double the previous.  ``fixed`` is the
    complementary resolution: ``1/tau`` for space studies, ``1/h`` for time
    studies.
    """

    params: SystemParams
    ic1: InitialCondition
    ic2: InitialCondition
    axis: str
    levels: tuple
    fixed: int
    label: str = ""

    def __post_init__(self):
        if self.axis not in ("space", "time"):
            raise ValueError(f"axis must be 'space' or 'time', got {self.axis!r}")
        lv = tuple(int(v) for v in self.levels)
        if len(lv) < 1 or any(b != 2 * a for a, b in zip(lv, lv[1:])):
            raise ValueError(f"levels must double at every step, got {lv}")
        object.__setattr__(self, "levels", lv)

    @property
    def T(self) -> float:
        return self.params.T

    def steps_for(self, inv_tau: int) -> int:
        L = inv_tau * self.T
        if abs(L - round(L)) > 1e-9:
            raise ValueError(f"1/tau={inv_tau} does not divide T={self.T}")
        return int(round(L))


@dataclass
class ConvergenceReport:
    config: StudyConfig
    errors1: list
    errors2: list
    rates1: list = field(default_factory=list)
    rates2: list = field(default_factory=list)

    def __post_init__(self):
        if not self.rates1:
            self.rates1 = observed_rates(self.errors1)
        if not self.rates2:
            self.rates2 = observed_rates(self.errors2)

    @property
    def levels(self):
        return self.config.levels

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("field,axis,level,error,rate\n")
        for name, errs, rates in (("G1", self.errors1, self.rates1), ("G2", self.errors2, self.rates2)):
            for lv, e, r in zip(self.levels, errs, rates):
                rs = "" if r is None else repr(float(r))
                buf.write(f"{name},{self.config.axis},{lv},{float(e)!r},{rs}\n")
        return buf.getvalue()

    def to_text(self) -> str:
        sym = "h" if self.config.axis == "space" else "tau"
        head = f"{'':>12} | {'1/' + sym:>8} | " + " ".join(f"{lv:>10}" for lv in self.levels)
        lines = [head, "-" * len(head)]
        for i, (errs, rates) in enumerate(((self.errors1, self.rates1), (self.errors2, self.rates2)), 1):
            tag = self.config.label if i == 1 else ""
            lines.append(f"{tag:>12} | {f'E{i},{sym}':>8} | " + " ".join(f"{e:10.3E}" for e in errs))
            cells = ["Rate".rjust(10)] + [("" if r is None else f"{r:.4f}").rjust(10) for r in rates[1:]]
            lines.append(f"{'':>12} | {'':>8} | " + " ".join(cells))
        return "\n".join(lines)


def observed_rates(errors) -> list:
    """log2(E_k / E_{k+1}) attached to level k+1; ``None`` where undefined."""
    out = [None]
    for a, b in zip(errors, errors[1:]):
        out.append(math.log(a / b, 2) if a > 0 and b > 0 else None)
    return out


# -- caching ------------------------------------------------------------------


def _ic_key(ic):
    if isinstance(ic, Nodal):
        return {"kind": "Nodal", "sha": hashlib.sha256(ic.values.tobytes()).hexdigest()}
    return {"kind": type(ic).__name__, **asdict(ic)}


class SolveCache:
    """Final-time solutions keyed by a content hash of the solve.

    Always memoises in memory; also persists ``.npz`` files when a directory
    is given (by default ``$FRACFPS_CACHE`` if set).
    """

    def __init__(self, directory=None):
        if directory is None:
            directory = os.environ.get("FRACFPS_CACHE") or None
        self.directory = Path(directory) if directory else None
        self._mem = {}

    @staticmethod
    def key(params: SystemParams, n_cells: int, L: int, ic1, ic2) -> str:
        blob = json.dumps(
            {
                "v": _CACHE_VERSION,
                "params": asdict(params),
                "n_cells": n_cells,
                "L": L,
                "ic1": _ic_key(ic1),
                "ic2": _ic_key(ic2),
            },
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode()).hexdigest()[:32]

    def get(self, key):
        if key in self._mem:
            return self._mem[key]
        if self.directory is not None:
            path = self.directory / f"{key}.npz"
            if path.exists():
                with np.load(path) as data:
                    val = (data["g1"].copy(), data["g2"].copy())
                self._mem[key] = val
                return val
        return None

    def put(self, key, g1, g2):
        self._mem[key] = (g1, g2)
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            tmp = self.directory / f"{key}.tmp.npz"
            np.savez(tmp, g1=g1, g2=g2)
            os.replace(tmp, self.directory / f"{key}.npz")


_DEFAULT_CACHE = None


def _default_cache():
    global _DEFAULT_CACHE
    if _DEFAULT_CACHE is None:
        _DEFAULT_CACHE = SolveCache()
    return _DEFAULT_CACHE


def _workers():
    try:
        return max(1, int(os.environ.get("FRACFPS_THREADS", "1")))
    except ValueError:
        return 1


def _final_state(config: StudyConfig, n_cells: int, L: int, cache: SolveCache):
    key = SolveCache.key(config.params, n_cells, L, config.ic1, config.ic2)
    hit = cache.get(key)
    if hit is not None:
        return hit
    mesh = UniformMesh(n_cells)
    grid = TimeGrid.from_steps(config.T, L)
    fp = solve_transient(config.params, mesh, grid, config.ic1, config.ic2)[-1]
    cache.put(key, fp.g1, fp.g2)
    return fp.g1, fp.g2


def _solve_all(config, runs, cache):
    runs = list(dict.fromkeys(runs))
    workers = _workers()
    if workers > 1 and len(runs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            states = list(pool.map(lambda r: _final_state(config, *r, cache), runs))
    else:
        states = [_final_state(config, *r, cache) for r in runs]
    return dict(zip(runs, states))


def spatial_study(config: StudyConfig, cache: SolveCache | None = None) -> ConvergenceReport:
    """Errors ``||G_h - G_{h/2}||`` on the finer mesh for every level ``1/h``."""
    if config.axis != "space":
        raise ValueError("spatial_study needs a space-axis config")
    validate(config.params)
    cache = cache if cache is not None else _default_cache()
    L = config.steps_for(config.fixed)
    runs = [(n, L) for lv in config.levels for n in (lv, 2 * lv)]
    states = _solve_all(config, runs, cache)
    e1, e2 = [], []
    for lv in config.levels:
        coarse, fine = UniformMesh(lv), UniformMesh(2 * lv)
        (c1, c2), (f1, f2) = states[(lv, L)], states[(2 * lv, L)]
        e1.append(l2_norm(prolongate_to(c1, coarse, fine) - f1, fine))
        e2.append(l2_norm(prolongate_to(c2, coarse, fine) - f2, fine))
    return ConvergenceReport(config, e1, e2)


def temporal_study(config: StudyConfig, cache: SolveCache | None = None) -> ConvergenceReport:
    """Errors ``||G_tau - G_{tau/2}||`` at ``t = T`` on a fixed mesh for every level ``1/tau``."""
    if config.axis != "time":
        raise ValueError("temporal_study needs a time-axis config")
    validate(config.params)
    cache = cache if cache is not None else _default_cache()
    n = config.fixed
    mesh = UniformMesh(n)
    runs = [(n, config.steps_for(k)) for lv in config.levels for k in (lv, 2 * lv)]
    states = _solve_all(config, runs, cache)
    e1, e2 = [], []
    for lv in config.levels:
        (c1, c2) = states[(n, config.steps_for(lv))]
        (f1, f2) = states[(n, config.steps_for(2 * lv))]
        e1.append(l2_norm(c1 - f1, mesh))
        e2.append(l2_norm(c2 - f2, mesh))
    return ConvergenceReport(config, e1, e2)


def run_study(config: StudyConfig, cache: SolveCache | None = None) -> ConvergenceReport:
    return (spatial_study if config.axis == "space" else temporal_study)(config, cache)


# -- presets ------------------------------------------------------------------


@dataclass(frozen=True)
class TablePreset:
    """The rows of one reference table; ``notes`` records where the
    configuration departs from the parameters stated with the experiment."""

    table_id: int
    title: str
    rows: tuple
    notes: str = ""

    @property
    def levels(self):
        return self.rows[0].levels


_SPACE_LEVELS = (50, 100, 200, 400, 800)
# Values that reproduce the published tables where they differ from the
# parameters stated alongside the experiments (see TablePreset.notes).
TABLE2_COUPLING = 2.0
TABLE2_STATED_COUPLING = -2.0
EXAMPLE3_ALPHA = (0.9, 0.8)
EXAMPLE3_STATED_ALPHA = (0.8, 0.9)
TABLE6_COUPLING = -2.0
TABLE6_S = (0.75, 0.25)
TABLE6_ALPHAS = ((0.3, 0.6), (0.4, 0.7), (0.5, 0.8))
_TABLE6_LABELS = ("(0.3,0.6)", "(0.4,0.7)", "(0.25,0.8)")
_TIME_LEVELS = (100, 200, 400, 800, 1600)
_IC_A = (Characteristic(0.5, 1.0), Characteristic(0.0, 0.5))


def _space_rows(alpha, a, inv_tau, T, ics, s_pairs):
    out = []
    for s1, s2 in s_pairs:
        p = SystemParams(alpha[0], alpha[1], s1, s2, a, T)
        label = f"s={s1}" if s1 == s2 else f"({s1},{s2})"
        out.append(StudyConfig(p, ics[0], ics[1], "space", _SPACE_LEVELS, inv_tau, label))
    return tuple(out)


def preset(table_id: int) -> TablePreset:
    """Configuration of one of the six reference refinement tables."""
    if table_id == 1:
        rows = _space_rows((0.4, 0.7), 2.0, 800, 1.0, _IC_A, [(0.1, 0.1), (0.25, 0.25), (0.4, 0.4)])
        return TablePreset(1, "spatial rates, s1 = s2 = s < 1/2, indicator data", rows)
    if table_id == 2:
        rows = _space_rows((0.4, 0.6), TABLE2_COUPLING, 800, 1.0, _IC_A,
                           [(0.1, 0.2), (0.3, 0.4), (0.6, 0.7), (0.8, 0.9)])
        return TablePreset(2, "spatial rates, different s1, s2, indicator data", rows,
                           "a = +2: the stated a = -2 makes the s < 1/2 rows grow and cannot give the published "
                           "errors, which a = +2 reproduces to all printed digits")
    if table_id == 3:
        ics = (PowerLeft(0.4999), PowerRight(0.4999))
        rows = _space_rows(EXAMPLE3_ALPHA, 2.0, 800, 1.0, ics, [(0.1, 0.2), (0.3, 0.4), (0.6, 0.7), (0.8, 0.9)])
        return TablePreset(3, "spatial rates, power data nu1 = nu2 = 0.4999", rows,
                           "alpha = (0.9, 0.8): the stated (0.8, 0.9) does not give the published errors")
    if table_id == 4:
        ics = (PowerLeft(0.4), PowerRight(0.3))
        rows = _space_rows(EXAMPLE3_ALPHA, 2.0, 800, 1.0, ics, [(0.1, 0.2), (0.3, 0.4)])
        return TablePreset(4, "spatial rates, power data with exponents -0.4, -0.3", rows,
                           "alpha = (0.9, 0.8) and data (1-x)^-0.4, x^-0.3: the caption values -0.4, -0.3 are "
                           "the exponents, consistent with the stated regularity of the data")
    if table_id == 5:
        ics = (PowerLeft(0.0), PowerRight(0.4999))
        rows = _space_rows((0.7, 0.6), 0.1, 50, 20.0, ics, [(0.4, 0.1), (0.4, 0.2), (0.6, 0.3)])
        return TablePreset(5, "spatial rates, power data nu1 = 0, nu2 = 0.4999, T = 20", rows)
    if table_id == 6:
        rows = []
        for label, (a1, a2) in zip(_TABLE6_LABELS, TABLE6_ALPHAS):
            p = SystemParams(a1, a2, TABLE6_S[0], TABLE6_S[1], TABLE6_COUPLING, 1.0)
            rows.append(StudyConfig(p, *_IC_A, "time", _TIME_LEVELS, 400, label))
        return TablePreset(6, "temporal rates, s = (0.25, 0.75), h = 1/400", tuple(rows),
                           "a = -2, s = (0.75, 0.25) and alpha = (0.5, 0.8) in the last row: with the stated "
                           "a = 2, s = (0.25, 0.75), alpha = (0.25, 0.8) the errors are ~300 times smaller than "
                           "published, while these values reproduce every published error and rate")
    raise KeyError(f"unknown table id {table_id!r}; expected 1..6")


# Published values for comparison, keyed by table id and row label:
# (finest-pair rate of G1, finest-pair rate of G2).
REFERENCE_RATES = {
    1: {"s=0.1": (0.5888, 0.6005), "s=0.25": (0.7523, 0.7535), "s=0.4": (0.8971, 0.8975)},
    2: {"(0.1,0.2)": (0.5913, 0.6992), "(0.3,0.4)": (0.8023, 0.8968),
        "(0.6,0.7)": (1.0472, 1.0546), "(0.8,0.9)": (1.0780, 1.0714)},
    3: {"(0.1,0.2)": (0.2709, 0.4475), "(0.3,0.4)": (0.6206, 0.7737),
        "(0.6,0.7)": (1.0033, 1.0158), "(0.8,0.9)": (1.0530, 1.0657)},
    4: {"(0.1,0.2)": (0.3677, 0.6005), "(0.3,0.4)": (0.6965, 0.8705)},
    5: {"(0.4,0.1)": (0.8737, 0.1947), "(0.4,0.2)": (0.8882, 0.3874), "(0.6,0.3)": (1.0095, 0.5707)},
    6: {"(0.3,0.6)": (0.9966, 0.9920), "(0.4,0.7)": (1.0007, 0.9967), "(0.25,0.8)": (1.0026, 0.9996)},
}

# Published errors at the coarsest level (E1, E2).
REFERENCE_ERRORS = {
    1: {"s=0.1": (1.293e-02, 9.139e-03), "s=0.25": (5.861e-03, 3.795e-03), "s=0.4": (2.334e-03, 1.468e-03)},
    2: {"(0.1,0.2)": (1.173e-02, 6.456e-03), "(0.3,0.4)": (4.105e-03, 1.853e-03),
        "(0.6,0.7)": (5.780e-04, 2.347e-04), "(0.8,0.9)": (1.143e-04, 3.297e-05)},
    3: {"(0.1,0.2)": (5.682e-02, 4.932e-02), "(0.3,0.4)": (9.879e-03, 8.644e-03),
        "(0.6,0.7)": (9.208e-04, 8.295e-04), "(0.8,0.9)": (1.290e-04, 9.645e-05)},
    4: {"(0.1,0.2)": (3.524e-02, 2.688e-02), "(0.3,0.4)": (6.941e-03, 5.211e-03)},
    5: {"(0.4,0.1)": (3.630e-04, 2.591e-02), "(0.4,0.2)": (3.417e-04, 1.122e-02),
        "(0.6,0.3)": (8.932e-05, 4.877e-03)},
    6: {"(0.3,0.6)": (3.980e-02, 1.038e-01), "(0.4,0.7)": (1.662e-02, 4.338e-02),
        "(0.25,0.8)": (8.279e-03, 2.198e-02)},
}


# -- steady validation study -------------------------------------------------


def dirichlet_study(s: float, levels=(32, 64, 128, 256, 512)):
    """L2 errors of the Galerkin solution of ``(-Delta)^s u = 1`` against the exact profile.

    Returns ``(errors, rates)`` with rates attached to the finer level.
    """
    u = exact_ball_solution(s)
    errors = []
    for n in levels:
        mesh = UniformMesh(n)
        errors.append(l2_error(u, dirichlet_solve(s, 1.0, mesh, assemble_stiffness(mesh, s)), mesh))
    return errors, observed_rates(errors)
