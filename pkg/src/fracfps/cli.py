"""Command-line front end.

Every run option can come from a flag or from a ``--config`` file of
``key = value`` lines (``#`` starts a comment); a flag always wins over the
file, which wins over the built-in default.  Keys are the long flag names
without the leading dashes, with ``-`` or ``_`` accepted interchangeably.

Exit codes: 0 success, 1 failed check, 2 usage or validation error,
3 runtime failure.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .converge import StudyConfig, dirichlet_study, preset, run_study
from .fem import UniformMesh, assemble_stiffness, dump_stiffness, l2_norm
from .l1 import TimeGrid, build_weights, solve_transient
from .model import ParameterError, SystemParams, coupling_from_m, parse_ic, validate
from .verify import QuadratureError, exact_ball_solution, fractional_laplacian_at, quad_stiffness_entry

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3

DEFAULT_IC1 = "chi:0.5:1"
DEFAULT_IC2 = "chi:0:0.5"

CHECKS = ("weights", "oracle", "dirichlet", "ball")


class UsageError(Exception):
    pass


class RunFailure(Exception):
    pass


def _run(fn, *a, **kw):
    """Call a numerical routine, mapping any failure to :class:`RunFailure`."""
    try:
        return fn(*a, **kw)
    except (UsageError, ParameterError):
        raise
    except Exception as exc:
        raise RunFailure(f"{type(exc).__name__}: {exc}") from exc


def _float_list(text):
    return [float(v) for v in str(text).replace(",", " ").split()]


def _int_list(text):
    return [int(v) for v in str(text).replace(",", " ").split()]


# -- config file --------------------------------------------------------------


def read_config(path) -> dict:
    """Parse a ``key = value`` file into a dict of strings."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _apply_config(parser, args, known=()):
    """Fill options still at ``None`` from the config file, converting with the option's type.

    Keys meaningful only to other subcommands (listed in ``known``) are
    ignored so that one file can serve several commands.
    """
    if not getattr(args, "config", None):
        return args
    try:
        values = read_config(args.config)
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    actions = {a.dest: a for a in parser._actions if a.option_strings}
    for key, text in values.items():
        act = actions.get(key)
        if act is None and key in known:
            continue
        if act is None or key == "config":
            raise UsageError(f"unknown config key {key!r}")
        if getattr(args, key) is not None and getattr(args, key) is not False:
            continue
        if act.nargs == 0:
            setattr(args, key, text.lower() in ("1", "true", "yes", "on"))
            continue
        try:
            setattr(args, key, act.type(text) if act.type else text)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"config key {key!r}: {exc}") from None
    return args


# -- parser -------------------------------------------------------------------


def _add_model_flags(p, need_space=True, need_time=True):
    g = p.add_argument_group("model")
    for name in ("alpha1", "alpha2", "s1", "s2"):
        g.add_argument(f"--{name}", type=float)
    g.add_argument("--a", type=float, help="coupling coefficient")
    g.add_argument("--m", type=float, help="stay probability; sets a = (1-m)/(2m-1)")
    g.add_argument("--T", type=float, help="final time (default 1)")
    g.add_argument("--ic1", type=str, help=f"chi:<lo>:<hi>, powL:<nu>, powR:<nu> or zero (default {DEFAULT_IC1})")
    g.add_argument("--ic2", type=str, help=f"as --ic1 (default {DEFAULT_IC2})")
    if need_space:
        g.add_argument("--grid", type=int, help="number of cells, 1/h")
    if need_time:
        g.add_argument("--tau", type=float, help="time step")
        g.add_argument("--ltau", type=int, help="number of steps L, tau = T/L")
    p.add_argument("--config", type=str, help="key = value file; flags override it")
    p.add_argument("--out", type=str, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracfps", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--no-timestamp", action="store_true", default=None,
                        help="omit the '# generated' line from written files")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("solve", parents=[common], help="time-march one configuration and write snapshots")
    _add_model_flags(p)
    p.add_argument("--snapshots", type=_float_list, help="extra snapshot times, comma separated")

    p = sub.add_parser("study-space", parents=[common], help="spatial refinement study")
    _add_model_flags(p, need_space=False)
    p.add_argument("--levels", type=_int_list, help="1/h values, each double the last")

    p = sub.add_parser("study-time", parents=[common], help="temporal refinement study")
    _add_model_flags(p, need_time=False)
    p.add_argument("--levels", type=_int_list, help="1/tau values, each double the last")

    p = sub.add_parser("table", parents=[common], help="reproduce one of the six reference tables")
    p.add_argument("table_id", type=int)
    p.add_argument("--out", type=str)
    p.add_argument("--rows", type=_int_list, help="run only these rows (1-based)")

    p = sub.add_parser("check", parents=[common], help="run the verification suites")
    p.add_argument("--only", action="append", choices=CHECKS, help="restrict to this suite (repeatable)")
    p.add_argument("--s", type=_float_list, help="fractional orders for the oracle and dirichlet suites")

    p = sub.add_parser("dump-matrix", parents=[common], help="write the first row of the stiffness matrix")
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--grid", type=int, required=True)
    p.add_argument("--backend", choices=("closed", "quadrature"), default="closed")
    p.add_argument("--out", type=str, help="file to write; stdout if omitted")
    return parser


# -- shared helpers -----------------------------------------------------------


def _params_from(args) -> SystemParams:
    missing = [n for n in ("alpha1", "alpha2", "s1", "s2") if getattr(args, n) is None]
    if args.a is None and args.m is None:
        missing.append("a (or m)")
    if missing:
        raise UsageError("missing required option(s): " + ", ".join(missing))
    T = 1.0 if args.T is None else args.T
    if args.m is not None:
        a = coupling_from_m(args.m) if args.a is None else args.a
        params = SystemParams(args.alpha1, args.alpha2, args.s1, args.s2, a, T, args.m)
    else:
        params = SystemParams(args.alpha1, args.alpha2, args.s1, args.s2, args.a, T)
    return validate(params)


def _ics_from(args):
    return parse_ic(args.ic1 or DEFAULT_IC1), parse_ic(args.ic2 or DEFAULT_IC2)


def _grid_from(args, T) -> TimeGrid:
    if args.tau is not None and args.ltau is not None:
        raise UsageError("give only one of --tau and --ltau")
    if args.ltau is not None:
        if args.ltau < 1:
            raise UsageError("--ltau must be a positive integer")
        return TimeGrid.from_steps(T, args.ltau)
    if args.tau is not None:
        return TimeGrid.from_tau(T, args.tau)
    raise UsageError("missing required option: tau (or ltau)")


def _mesh_from(args) -> UniformMesh:
    if args.grid is None:
        raise UsageError("missing required option: grid")
    return UniformMesh(args.grid)


def _header(args) -> str:
    if args.no_timestamp:
        return ""
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return f"# generated {stamp} by fracfps {__version__}\n"


def _time_tag(t: float) -> str:
    return f"{t:.10g}"


def _out_dir(args) -> Path | None:
    if not args.out:
        return None
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


# -- commands -----------------------------------------------------------------


def cmd_solve(args) -> int:
    params = _params_from(args)
    ic1, ic2 = _ics_from(args)
    mesh = _mesh_from(args)
    grid = _grid_from(args, params.T)
    times = list(args.snapshots or [])
    for t in times:
        grid.index_of(t)
    out = _out_dir(args)

    snaps = _run(solve_transient, params, mesh, grid, ic1, ic2, snapshot_times=times or None)
    if out is not None:
        head = _header(args)
        x = mesh.nodes
        for fp in snaps:
            lines = [f"{xi!r},{a!r},{b!r}" for xi, a, b in zip(x.tolist(), fp.g1.tolist(), fp.g2.tolist())]
            text = head + "x,g1,g2\n" + "\n".join(lines) + "\n"
            (out / f"snap_t{_time_tag(fp.t)}.csv").write_text(text)
    final = snaps[-1]
    n1, n2 = l2_norm(final.g1, mesh), l2_norm(final.g2, mesh)
    print(f"t={_time_tag(final.t)} steps={grid.L} cells={mesh.n_cells} |G1|_L2={n1!r} |G2|_L2={n2!r}")
    return EXIT_OK


def _write_report(report, out: Path, stem: str, head: str):
    (out / f"{stem}.csv").write_text(head + report.to_csv())
    (out / f"{stem}.txt").write_text(report.to_text() + "\n")


def _cmd_study(args, axis) -> int:
    params = _params_from(args)
    ic1, ic2 = _ics_from(args)
    if not args.levels:
        raise UsageError("missing required option: levels")
    if axis == "space":
        inv_tau = 1.0 / _grid_from(args, params.T).tau
        if abs(inv_tau - round(inv_tau)) > 1e-6 * inv_tau:
            raise UsageError(f"1/tau must be an integer for a spatial study, got {inv_tau}")
        fixed = int(round(inv_tau))
    else:
        fixed = _mesh_from(args).n_cells
    try:
        config = StudyConfig(params, ic1, ic2, axis, tuple(args.levels), fixed)
        for lv in config.levels if axis == "time" else (fixed,):
            config.steps_for(lv)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = _run(run_study, config)
    print(report.to_text())
    out = _out_dir(args)
    if out is not None:
        _write_report(report, out, f"study_{axis}", _header(args))
    return EXIT_OK


def cmd_study_space(args) -> int:
    return _cmd_study(args, "space")


def cmd_study_time(args) -> int:
    return _cmd_study(args, "time")


def cmd_table(args) -> int:
    try:
        table = preset(args.table_id)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    rows = list(enumerate(table.rows, 1))
    if args.rows:
        bad = [r for r in args.rows if not 1 <= r <= len(rows)]
        if bad:
            raise UsageError(f"table {args.table_id} has rows 1..{len(rows)}, got {bad}")
        rows = [rows[r - 1] for r in args.rows]
    out = _out_dir(args)
    head = _header(args)
    print(f"Table {table.table_id}: {table.title}")
    if table.notes:
        print(f"note: {table.notes}")
    for idx, config in rows:
        report = _run(run_study, config)
        print(report.to_text())
        if out is not None:
            _write_report(report, out, f"table{table.table_id}_row{idx}", head)
    return EXIT_OK


def cmd_dump_matrix(args) -> int:
    if args.grid < 2:
        raise UsageError("--grid must be at least 2")
    if not 0.0 < args.s < 1.0:
        raise UsageError("--s must lie in (0, 1)")
    stiff = assemble_stiffness(UniformMesh(args.grid), args.s, backend=args.backend)
    if args.out:
        with open(args.out, "w") as fh:
            dump_stiffness(stiff, fh)
    else:
        dump_stiffness(stiff, sys.stdout)
    return EXIT_OK


# -- verification suites ------------------------------------------------------


def check_weights():
    """Telescoping of the L1 convolution weights and the endpoint-extended rule."""
    worst_tel = worst_end = 0.0
    for alpha in (0.1, 0.3, 0.5, 0.7, 0.9):
        w = build_weights(alpha, 10_000)
        worst_tel = max(worst_tel, float(np.max(np.abs(np.cumsum(w.d) - w.b))))
        for n in (1, 2, 10, 1000, 10_000):
            total = math.fsum(w.d[:n]) + w.endpoint_weight(n)
            ref = n ** (-w.order) / math.gamma(1.0 - w.order)
            worst_end = max(worst_end, abs(total - ref))
    ok = worst_tel <= 1e-13 and worst_end <= 1e-12
    return ok, f"telescoping max {worst_tel:.2e} (tol 1e-13), endpoint max {worst_end:.2e} (tol 1e-12)"


def check_oracle(s_values=None):
    """Closed-form stiffness entries against the adaptive quadrature oracle."""
    s_values = s_values or (0.1, 0.25, 0.4, 0.5, 0.75, 0.9)
    worst = 0.0
    for n in (8, 16):
        mesh = UniformMesh(n)
        for s in s_values:
            stiff = assemble_stiffness(mesh, s)
            for k in range(mesh.n_dof):
                ref = quad_stiffness_entry(1, 1 + k, mesh, s).value
                worst = max(worst, abs(stiff.first_row[k] - ref) / abs(ref))
    return worst <= 1e-6, f"max relative discrepancy {worst:.2e} (tol 1e-6)"


def check_dirichlet(s_values=None):
    """Refinement against the exact solution for a unit load."""
    s_values = s_values or (0.25, 0.5, 0.75)
    ok, parts = True, []
    for s in s_values:
        _, rates = dirichlet_study(s)
        need = min(0.5 + s, 1.0) - 0.1
        ok &= rates[-1] >= need
        parts.append(f"s={s}: rate {rates[-1]:.3f} (need >= {need:.2f})")
    return ok, "; ".join(parts)


def check_ball(s_values=None):
    """Principal-value evaluation of the fractional Laplacian of the exact profile."""
    s_values = s_values or (0.25, 0.5, 0.75)
    worst = 0.0
    for s in s_values:
        u = exact_ball_solution(s)
        for x0 in (0.1, 0.3, 0.5):
            worst = max(worst, abs(fractional_laplacian_at(u, x0, s) - 1.0))
    return worst <= 1e-4, f"max |(-Delta)^s u - 1| = {worst:.2e} (tol 1e-4)"


def cmd_check(args) -> int:
    selected = args.only or list(CHECKS)
    if args.s is not None and any(not 0.0 < s < 1.0 for s in args.s):
        raise UsageError("--s values must lie in (0, 1)")
    runners = {
        "weights": lambda: check_weights(),
        "oracle": lambda: check_oracle(args.s),
        "dirichlet": lambda: check_dirichlet(args.s),
        "ball": lambda: check_ball(args.s),
    }
    failed = 0
    for name in CHECKS:
        if name not in selected:
            continue
        ok, detail = _run(runners[name])
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_CHECK if failed else EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "study-space": cmd_study_space,
    "study-time": cmd_study_time,
    "table": cmd_table,
    "check": cmd_check,
    "dump-matrix": cmd_dump_matrix,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    subparsers = parser._subparsers._group_actions[0].choices
    sub = subparsers[args.command]
    known = {a.dest for p in subparsers.values() for a in p._actions if a.option_strings}
    try:
        _apply_config(sub, args, known)
        return COMMANDS[args.command](args)
    except (UsageError, ParameterError) as exc:
        print(f"fracfps {args.command}: error: {exc}", file=sys.stderr)
        if isinstance(exc, UsageError) and str(exc).startswith("missing"):
            sub.print_usage(sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"fracfps {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RunFailure, QuadratureError, OSError) as exc:
        print(f"fracfps {args.command}: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
