import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from halfwave import spectral as sp
from halfwave.errors import ConfigurationError, SolvabilityError
from halfwave.ground_state import solve_ground_state
from halfwave.linearized import LinearizedOperator, min_eigenvalue_projected, solve_constrained
from halfwave.spectral import field, make_grid


@pytest.fixture(scope="module")
def oracle_gs():
    """Ground state on the dense-oracle grid."""
    return solve_ground_state(make_grid(512, 40.0), tol=1e-10)


def bump(grid, sector, width, shift=0.0):
    if sector == 0:
        return field(grid, lambda r: np.exp(-((r - shift) / width) ** 2))
    return field(grid, lambda r: r * np.exp(-((r - shift) / width) ** 2), sector=1)


def test_minus_kernel(reference_gs):
    Q = reference_gs.Q
    assert LinearizedOperator(reference_gs, "minus").apply(Q).norm() <= 1e-9 * Q.norm()


def test_plus_sector1_kernel(doubled_gs):
    # 4th-order-limited near r = 0; the reference grid gives 4.6e-7
    L = LinearizedOperator(doubled_gs, "plus", 1)
    dQ = sp.gradient_component(doubled_gs.Q)
    assert L.apply(dQ).norm() <= 1e-7 * dQ.norm()


def test_apply_formula(oracle_gs):
    f = bump(oracle_gs.grid, 0, 2.0)
    Q = oracle_gs.Q.values.real
    expected = sp.apply_d(f).values + f.values - (5 / 3) * Q ** (2 / 3) * f.values
    assert np.allclose(LinearizedOperator(oracle_gs, "plus").apply(f).values, expected, atol=1e-13)


@pytest.mark.parametrize("kind", ["plus", "minus"])
@pytest.mark.parametrize("sector", [0, 1])
def test_symmetry(oracle_gs, kind, sector):
    L = LinearizedOperator(oracle_gs, kind, sector)
    f, g = bump(oracle_gs.grid, sector, 1.5), bump(oracle_gs.grid, sector, 2.5, 1.0) * (1 + 1j)
    lhs = sp.inner_product(L.apply(f), g)
    rhs = sp.inner_product(f, L.apply(g))
    assert abs(lhs - rhs) <= 1e-9 * f.norm() * g.norm()


def test_sector_mismatch(oracle_gs):
    with pytest.raises(ConfigurationError):
        LinearizedOperator(oracle_gs, "plus", 1).apply(oracle_gs.Q)


def test_bad_kind(oracle_gs):
    with pytest.raises(ConfigurationError):
        LinearizedOperator(oracle_gs, "neutral")


def test_s10_solve(reference_gs):
    Q = reference_gs.Q
    sol = solve_constrained(LinearizedOperator(reference_gs, "minus"), sp.lambda_op(Q))
    assert abs(sp.inner_product(sol.solution, Q)) <= 1e-9 * sol.solution.norm() * Q.norm()
    assert sol.residual <= 1e-8 * Q.norm()


def test_s01_solve(reference_gs):
    Q = reference_gs.Q
    g = -sp.gradient_component(Q)
    sol = solve_constrained(LinearizedOperator(reference_gs, "minus", 1), g)
    assert sol.residual <= 1e-8 * g.norm()
    assert sol.solution.norm() > 0


def test_solvability_error(reference_gs):
    with pytest.raises(SolvabilityError):
        solve_constrained(LinearizedOperator(reference_gs, "minus"), reference_gs.Q)


def test_solution_stable_under_doubling(reference_gs, doubled_gs):
    sols = [solve_constrained(LinearizedOperator(g, "minus"), sp.lambda_op(g.Q)).solution
            for g in (reference_gs, doubled_gs)]
    coarse = sp.field(doubled_gs.grid, lambda r: sp.evaluate(sols[0], r))
    assert (coarse - sols[1]).norm() <= 1e-7 * sols[1].norm()


@settings(max_examples=10, deadline=None)
@given(width=st.floats(0.5, 4.0), shift=st.floats(0.0, 5.0))
def test_solve_then_apply_reproduces_rhs(oracle_gs, width, shift):
    L = LinearizedOperator(oracle_gs, "plus")
    g = bump(oracle_gs.grid, 0, width, shift)
    sol = solve_constrained(L, g)
    assert sol.residual <= 1e-9 * g.norm()


def test_minus_unconstrained_eigen(oracle_gs):
    w, v = min_eigenvalue_projected(LinearizedOperator(oracle_gs, "minus"))
    Q = oracle_gs.Q
    assert abs(w[0]) <= 1e-6
    overlap = abs(sp.inner_product(v[0], Q)) / (v[0].norm() * Q.norm())
    assert overlap >= 1 - 1e-6


def test_minus_constrained_positive(oracle_gs):
    w, _ = min_eigenvalue_projected(LinearizedOperator(oracle_gs, "minus"), [oracle_gs.Q])
    assert w[0] > 0.5


def test_plus_has_negative_direction(oracle_gs):
    L = LinearizedOperator(oracle_gs, "plus")
    w, _ = min_eigenvalue_projected(L, count=2)
    assert w[0] < 0 < w[1]


@pytest.mark.parametrize("kind, use_q", [("minus", False), ("minus", True), ("plus", False)])
def test_dense_and_iterative_agree(oracle_gs, kind, use_q):
    L = LinearizedOperator(oracle_gs, kind)
    cons = [oracle_gs.Q] if use_q else []
    wd, _ = min_eigenvalue_projected(L, cons, dense=True)
    wi, _ = min_eigenvalue_projected(L, cons, dense=False)
    assert abs(wd[0] - wi[0]) <= 1e-6


def test_dependent_constraints(oracle_gs):
    with pytest.raises(ConfigurationError):
        min_eigenvalue_projected(LinearizedOperator(oracle_gs, "minus"), [oracle_gs.Q, 2 * oracle_gs.Q])
