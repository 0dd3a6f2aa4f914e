import math

import numpy as np
import pytest

from fracfps.fem import UniformMesh, assemble_stiffness, dirichlet_solve, l2_norm, l2_project
from fracfps.l1 import TimeGrid, solve_transient
from fracfps.model import Characteristic, Nodal, SystemParams, Zero
from fracfps.verify import (
    QuadratureError,
    QuadratureSpec,
    ball_constant,
    exact_ball_solution,
    fine_reference,
    fractional_laplacian_at,
    l2_error,
    quad_stiffness_entry,
    rl_monomial,
    rl_numeric,
)

S_VALUES = [0.1, 0.25, 0.4, 0.5, 0.75, 0.9]


@pytest.fixture(scope="module")
def oracle_table():
    rows = []
    for n in (8, 16):
        mesh = UniformMesh(n)
        for s in S_VALUES:
            closed = assemble_stiffness(mesh, s).first_row
            for k in range(mesh.n_dof):
                rows.append((n, s, k, closed[k], quad_stiffness_entry(1, 1 + k, mesh, s)))
    return rows


def test_oracle_agrees_with_closed_form(oracle_table):
    worst = max(abs(c - q.value) / abs(q.value) for *_, c, q in oracle_table)
    assert worst <= 1e-6


def test_oracle_error_bound_is_honest(oracle_table):
    honest = [abs(c - q.value) <= q.error for *_, c, q in oracle_table]
    assert sum(honest) >= 0.99 * len(honest)
    assert all(q.converged for *_, q in oracle_table)


def test_oracle_off_origin_entries_independent_of_row():
    # Toeplitz structure is a property of the integral, not just of the formula
    mesh = UniformMesh(8)
    a = quad_stiffness_entry(2, 4, mesh, 0.3).value
    b = quad_stiffness_entry(5, 7, mesh, 0.3).value
    assert a == pytest.approx(b, rel=1e-9)
    assert quad_stiffness_entry(4, 2, mesh, 0.3).value == pytest.approx(a, rel=1e-12)


def test_oracle_is_deterministic():
    mesh = UniformMesh(8)
    assert quad_stiffness_entry(1, 3, mesh, 0.75) == quad_stiffness_entry(1, 3, mesh, 0.75)


def test_oracle_reports_failure():
    mesh = UniformMesh(8)
    spec = QuadratureSpec(rtol=1e-15, max_panels=12)
    with pytest.raises(QuadratureError):
        quad_stiffness_entry(1, 1, mesh, 0.9, spec)
    res = quad_stiffness_entry(1, 1, mesh, 0.9, spec, strict=False)
    assert not res.converged and math.isfinite(res.value)


def test_oracle_rejects_bad_input():
    with pytest.raises(IndexError):
        quad_stiffness_entry(0, 1, UniformMesh(8), 0.5)
    with pytest.raises(ValueError):
        QuadratureSpec(rtol=0.0)


def test_ball_constant_classical_limit():
    assert ball_constant(1.0) == pytest.approx(0.5, rel=1e-14)
    u = exact_ball_solution(1.0)
    assert u(0.5) == pytest.approx(0.125)
    # s = 1/2: 2^-1 sqrt(pi) / (Gamma(1) Gamma(3/2)) = 1
    assert ball_constant(0.5) == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_ball_profile_boundary_and_equation(s):
    u = exact_ball_solution(s)
    assert u(0.0) == 0.0 and u(1.0) == 0.0 and u(1.5) == 0.0
    for x0 in (0.1, 0.3, 0.5):
        assert fractional_laplacian_at(u, x0, s) == pytest.approx(1.0, abs=1e-4)


def test_ball_rejects_bad_order():
    with pytest.raises(ValueError):
        exact_ball_solution(0.0)


@pytest.mark.parametrize("s, need", [(0.25, 0.65), (0.5, 0.9), (0.75, 0.9)])
def test_galerkin_converges_to_ball_solution(s, need):
    u = exact_ball_solution(s)
    errs = [l2_error(u, dirichlet_solve(s, 1.0, UniformMesh(n)), UniformMesh(n)) for n in (64, 128, 256)]
    assert errs[0] > errs[1] > errs[2]
    assert math.log2(errs[1] / errs[2]) >= need


def test_l2_error_of_exact_p1_function_vanishes():
    mesh = UniformMesh(10)
    v = np.sin(np.pi * mesh.nodes)
    p1 = lambda x: np.interp(x, np.r_[0, mesh.nodes, 1], np.r_[0, v, 0])
    assert l2_error(p1, v, mesh) < 1e-14
    # constant offset c inside (0, 1) has error c
    assert l2_error(lambda x: p1(x) + 0.5, v, mesh) == pytest.approx(0.5, rel=1e-12)


def test_rl_monomial_examples():
    assert rl_monomial(0.5, 1.0, 1.0) == pytest.approx(2 / math.sqrt(math.pi), rel=1e-14)
    assert rl_monomial(0.3, 0.0, 2.0) == pytest.approx(2.0**-0.3 / math.gamma(0.7), rel=1e-14)
    with pytest.raises(ValueError):
        rl_monomial(0.5, -1.0, 1.0)


@pytest.mark.parametrize("alpha, beta, t", [(0.3, 2.0, 1.0), (0.5, 1.0, 0.7), (0.8, 0.5, 1.3), (0.6, 3.0, 0.4)])
def test_rl_monomial_matches_definition(alpha, beta, t):
    num = rl_numeric(lambda x: x**beta, alpha, t)
    assert num == pytest.approx(rl_monomial(alpha, beta, t), abs=1e-6, rel=1e-6)


PARAMS = SystemParams(0.3, 0.6, 0.25, 0.75, 2.0, 1.0)
IC1, IC2 = Characteristic(0.5, 1.0), Characteristic(0.0, 0.5)


def test_fine_reference_r1_is_plain_solution():
    mesh = UniformMesh(16)
    grid = TimeGrid.from_steps(1.0, 10)
    a = fine_reference(PARAMS, mesh, grid, IC1, IC2, r=1)
    b = solve_transient(PARAMS, mesh, grid, IC1, IC2)[-1]
    assert np.array_equal(a.g1, b.g1) and np.array_equal(a.g2, b.g2)
    with pytest.raises(ValueError):
        fine_reference(PARAMS, mesh, grid, IC1, IC2, r=3)


def test_fine_reference_zero_data():
    mesh = UniformMesh(8)
    ref = fine_reference(PARAMS, mesh, TimeGrid.from_steps(1.0, 4), Zero(), Nodal(np.zeros(7)), r=4)
    assert not ref.g1.any() and not ref.g2.any()


def test_errors_against_fine_reference_are_first_order():
    # each tau run is compared with its own tau/8 reference: E ~ (1 - 1/8) C tau;
    # L = 10 is still pre-asymptotic for the indicator data
    mesh = UniformMesh(32)
    for field in ("g1", "g2"):
        errs = []
        for L in (20, 40, 80):
            grid = TimeGrid.from_steps(1.0, L)
            fp = solve_transient(PARAMS, mesh, grid, IC1, IC2)[-1]
            ref = fine_reference(PARAMS, mesh, grid, IC1, IC2, r=8)
            errs.append(l2_norm(getattr(fp, field) - getattr(ref, field), mesh))
        rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
        assert all(abs(r - 1.0) <= 0.1 for r in rates), rates
