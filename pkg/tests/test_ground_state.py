import numpy as np
import pytest

from halfwave import spectral as sp
from halfwave.errors import DomainError, IterationDivergedError
from halfwave.ground_state import (
    equation_residual, gn_functional, gn_optimal_constant, is_monotone_decreasing,
    pohozaev_report, potential_integral, solve_ground_state, stabiliser, tail_slope,
)
from halfwave.spectral import field, make_grid


def random_radial(grid, rng, count=4):
    """Sum of Gaussians with random centres, widths and phases."""
    c = rng.uniform(0, 4, count)
    w = rng.uniform(0.5, 3, count)
    a = rng.normal(size=count) + 1j * rng.normal(size=count)
    return field(grid, lambda r: sum(a[i] * np.exp(-((r - c[i]) / w[i]) ** 2) for i in range(count)))


def test_reference_solve(reference_gs):
    Q = reference_gs.Q
    assert reference_gs.residual_norm <= 1e-10
    assert equation_residual(Q) <= 1e-10
    assert np.all(Q.values.real > 0)
    assert is_monotone_decreasing(Q)
    assert tail_slope(Q, 50, 150) == pytest.approx(-4, abs=0.3)


def test_fixed_point_guess(reference_gs):
    gs = solve_ground_state(reference_gs.grid, tol=1e-10, guess=reference_gs.Q)
    assert gs.iterations == 1
    assert stabiliser(reference_gs.Q) == pytest.approx(1, abs=1e-10)
    assert (gs.Q - reference_gs.Q).norm() <= 1e-10 * reference_gs.Q.norm()


def test_exponent_one_does_not_converge():
    with pytest.raises(IterationDivergedError) as info:
        solve_ground_state(make_grid(1024, 100.0), tol=1e-9, exponent=1.0, max_iter=300)
    assert info.value.history[-1] > 1e-3


def test_unreachable_tolerance_carries_history():
    with pytest.raises(IterationDivergedError) as info:
        solve_ground_state(make_grid(512, 40.0), tol=1e-30, max_iter=50)
    assert len(info.value.history) == 50


@pytest.mark.parametrize("tol", [0.0, -1.0])
def test_nonpositive_tolerance(tol):
    with pytest.raises(DomainError):
        solve_ground_state(make_grid(512, 40.0), tol=tol)


def test_pohozaev_ratios(reference_gs):
    rep = pohozaev_report(reference_gs)
    assert rep["kinetic_over_mass"] == pytest.approx(3, abs=1e-6)
    assert rep["potential_over_mass"] == pytest.approx(4, abs=1e-6)
    assert abs(rep["energy"]) <= 1e-6 * rep["mass"]


def test_independent_virial_quadrature(reference_gs):
    # A + B = C from pairing the equation with Q, without the stored sidecar values
    Q = reference_gs.Q
    A = sp.inner_product(Q, sp.apply_d(Q)).real
    B = sp.inner_product_spectral(Q, Q).real
    C = potential_integral(Q)
    assert abs(A + B - C) <= 1e-8 * B


def test_doubled_grid_reverifies(reference_gs, doubled_gs):
    coarse = sp.field(doubled_gs.grid, lambda r: sp.evaluate(reference_gs.Q, r).real)
    assert (doubled_gs.Q - coarse).norm() <= 10 * 1e-10 * doubled_gs.Q.norm()


def test_mass_grid_independence(reference_gs):
    gs = solve_ground_state(make_grid(8192, 400.0), tol=1e-10)
    assert abs(gs.mass - reference_gs.mass) <= 1e-5 * reference_gs.mass


def test_gn_value_at_q(reference_gs):
    assert gn_functional(reference_gs.Q) == pytest.approx(0.75 * reference_gs.mass ** (1 / 3), rel=1e-6)


@pytest.mark.parametrize("lam", [2.0, 1.5, 0.9])
def test_gn_scale_invariance(doubled_gs, lam):
    # compression by 2 needs the doubled resolution to stay within 1e-8
    Ql = sp.rescale(doubled_gs.Q, lam)
    assert gn_functional(Ql) == pytest.approx(gn_functional(doubled_gs.Q), rel=1e-8)


def test_gn_inequality_random_fields(reference_gs, rng):
    c_opt = gn_optimal_constant(reference_gs)
    for _ in range(20):
        u = random_radial(reference_gs.grid, rng)
        assert potential_integral(u) <= c_opt * sp.half_norm_sq(u) * u.norm() ** (2 / 3)


def test_gn_local_minimality(reference_gs, rng):
    Q = reference_gs.Q
    wq = gn_functional(Q)
    for _ in range(50):
        p = random_radial(reference_gs.grid, rng, 3).real
        u = Q + p * (0.01 * Q.norm() / p.norm())
        assert gn_functional(u) >= wq - 1e-6


def test_gn_zero_field(small_grid):
    with pytest.raises(DomainError):
        gn_functional(sp.zeros(small_grid))


def test_sidecar_fields(reference_gs):
    side = reference_gs.sidecar()
    assert set(side) >= {"residual", "mass", "kinetic", "potential", "grid"}
    assert side["grid"] == {"n": 4096, "r_max": 200.0}
