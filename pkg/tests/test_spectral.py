import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from halfwave import spectral as sp
from halfwave.errors import ConfigurationError, DomainError, NumericError
from halfwave.spectral import MultiplierSpec, SectorField, field, make_grid


@pytest.fixture(scope="module")
def grid():
    return make_grid(512, 40.0)


def sine_mode(grid, k):
    rho = grid.rho[k - 1]
    return field(grid, lambda r: np.sin(rho * r) / r), rho


def gaussian(grid, sector=0, width=1.0):
    if sector == 0:
        return field(grid, lambda r: np.exp(-(r / width) ** 2))
    return field(grid, lambda r: r * np.exp(-(r / width) ** 2), sector=1)


# -- grid and field construction ------------------------------------------------------

def test_grid_nodes_exclude_endpoints(grid):
    assert grid.r[0] == pytest.approx(grid.h)
    assert grid.r[-1] == pytest.approx(grid.r_max - grid.h)
    assert np.all(np.diff(grid.r) > 0)


@pytest.mark.parametrize("n, r_max", [(8, 10.0), (64, 0.0), (64, -1.0)])
def test_grid_rejects_bad_parameters(n, r_max):
    with pytest.raises(ConfigurationError):
        make_grid(n, r_max)


def test_make_grid_is_cached():
    assert make_grid(64, 5.0) is make_grid(64, 5.0)


def test_field_shape_mismatch(grid):
    with pytest.raises(ConfigurationError):
        SectorField(grid, 0, np.zeros(3))


def test_unsupported_sector(grid):
    with pytest.raises(ConfigurationError):
        SectorField(grid, 2, np.zeros(grid.n))


# -- transforms ------------------------------------------------------------------------

def test_sine_mode_has_single_coefficient(grid):
    f, _ = sine_mode(grid, 3)
    c = sp.forward_transform(f)
    others = np.delete(np.abs(c), 2)
    assert others.max() <= 1e-12 * abs(c[2])


def test_zero_field_transforms_to_zero(grid):
    assert not np.any(sp.forward_transform(sp.zeros(grid)))


def test_gaussian_transform_matches_closed_form():
    g = make_grid(1024, 12.0)
    c = sp.forward_transform(gaussian(g))
    # unitary 3D transform of exp(-r^2) is 2^{-3/2} exp(-rho^2/4)
    exact = 2 ** -1.5 * np.exp(-g.rho**2 / 4)
    assert np.max(np.abs(c - exact)) <= 1e-8


@pytest.mark.parametrize("sector, tol", [(0, 1e-12), (1, 1e-8)])
def test_round_trip(grid, sector, tol):
    f = gaussian(grid, sector, 2.0) * (1 + 0.5j)
    back = sp.inverse_transform(grid, sp.forward_transform(f), sector)
    assert (back - f).norm() <= tol * f.norm()


@pytest.mark.parametrize("sector", [0, 1])
def test_parseval(grid, sector):
    f = gaussian(grid, sector, 1.5)
    g = gaussian(grid, sector, 2.5) * np.exp(1j * grid.r / 3)
    real = sp.inner_product(f, g)
    spec = sp.inner_product_spectral(f, g)
    assert abs(real - spec) <= 1e-10 * f.norm() * g.norm()


def test_sector_mismatch_rejected(grid):
    with pytest.raises(ConfigurationError):
        sp.inner_product(gaussian(grid, 0), gaussian(grid, 1))


# -- multipliers -----------------------------------------------------------------------

def test_d_on_eigenfunction(grid):
    f, rho = sine_mode(grid, 5)
    assert (sp.apply_d(f) - f * rho).norm() <= 1e-12 * rho * f.norm()


def test_resolvent_on_eigenfunction(grid):
    f, rho = sine_mode(grid, 7)
    out = sp.apply_multiplier(f, sp.resolvent_laplace(1.0))
    assert (out - f / (rho**2 + 1)).norm() <= 1e-12 * f.norm()


def test_propagator_at_zero_is_identity(grid):
    f = gaussian(grid) * (1 - 2j)
    assert (sp.apply_multiplier(f, sp.propagator(0.0)) - f).norm() <= 1e-14 * f.norm()


def test_multiplier_composition_commutes(grid):
    f = gaussian(grid, 0, 2.0)
    m1, m2 = sp.resolvent_d(1.0), sp.propagator(0.3)
    a = sp.apply_multiplier(sp.apply_multiplier(f, m1), m2)
    b = sp.apply_multiplier(sp.apply_multiplier(f, m2), m1)
    c = sp.apply_multiplier(f, m1 * m2)
    assert (a - b).norm() <= 1e-12 * f.norm()
    assert (a - c).norm() <= 1e-12 * f.norm()


def test_nan_symbol_reports_mode(grid):
    bad = MultiplierSpec(lambda rho: np.where(rho > rho[9] - 1e-12, np.nan, 1.0), "bad")
    with pytest.raises(NumericError) as info:
        sp.apply_multiplier(gaussian(grid), bad)
    assert info.value.mode_index == 10  # 1-based mode number


def test_real_symbol_preserves_real_fields(grid):
    out = sp.apply_d(gaussian(grid))
    assert np.all(out.values.imag == 0)


@pytest.mark.parametrize("sector", [0, 1])
def test_d_symmetric(grid, sector):
    f = gaussian(grid, sector, 1.0)
    g = gaussian(grid, sector, 3.0) * np.cos(grid.r)
    lhs = sp.inner_product(sp.apply_d(f), g)
    rhs = sp.inner_product(f, sp.apply_d(g))
    assert abs(lhs - rhs) <= 1e-10 * f.norm() * g.norm()


# -- inner products and the generator --------------------------------------------

def test_gaussian_mass():
    g = make_grid(1024, 12.0)
    f = gaussian(g)
    assert sp.inner_product(f, f).real == pytest.approx(np.pi / 2 * np.sqrt(np.pi / 2), rel=1e-12)


def test_inner_product_with_zero(grid):
    assert sp.inner_product(gaussian(grid), sp.zeros(grid)) == 0


def test_inner_product_hermitian(grid):
    f = gaussian(grid) * (1 + 1j)
    g = gaussian(grid, 0, 2.0) * np.exp(0.5j * grid.r)
    assert sp.inner_product(f, g) == pytest.approx(np.conj(sp.inner_product(g, f)), rel=1e-14)


def test_lambda_of_gaussian():
    g = make_grid(1024, 12.0)
    out = sp.lambda_op(gaussian(g))
    exact = (1.5 - 2 * g.r**2) * np.exp(-g.r**2)
    assert np.max(np.abs(out.values - exact)) <= 1e-8


def test_lambda_of_zero(grid):
    assert sp.lambda_op(sp.zeros(grid)).norm() == 0


def skew_defect(grid, sector):
    f = gaussian(grid, sector, 1.2)
    g = gaussian(grid, sector, 2.0) * np.exp(1j * grid.r / 4)
    s = sp.inner_product(sp.lambda_op(f), g) + sp.inner_product(f, sp.lambda_op(g))
    return abs(s) / (f.norm() * g.norm())


def test_lambda_skew_adjoint(grid):
    assert skew_defect(grid, 0) <= 1e-9


def test_lambda_skew_adjoint_sector1_converges():
    # 4th-order stencil on sector 1: the defect is truncation error, not a bug
    coarse, fine = (skew_defect(make_grid(n, 40.0), 1) for n in (512, 1024))
    assert fine <= 1e-6
    assert np.log2(coarse / fine) >= 3.5


def test_rescale_is_isometric():
    g = make_grid(1024, 30.0)
    f = gaussian(g, 0, 1.5)
    assert sp.rescale(f, 2.0).norm() == pytest.approx(f.norm(), rel=1e-9)


def test_evaluate_reproduces_nodes_and_origin(grid):
    f = gaussian(grid, 0, 2.0)
    assert np.allclose(sp.evaluate(f, grid.r[:50]), f.values[:50], atol=1e-13)
    assert sp.evaluate(f, np.array([0.0]))[0] == pytest.approx(1.0, abs=1e-12)
    assert sp.evaluate(f, np.array([grid.r_max + 1]))[0] == 0


# -- smoothing and the half-norm identity --------------------------------------------

def test_smoothing_on_eigenfunction(grid):
    f, rho = sine_mode(grid, 4)
    out = sp.s_smoothing(f, 2.0)
    assert (out - f * (np.sqrt(2 / np.pi) / (rho**2 + 2.0))).norm() <= 1e-12 * f.norm()


@pytest.mark.parametrize("s", [0.0, -1.0])
def test_smoothing_rejects_nonpositive(grid, s):
    with pytest.raises(DomainError):
        sp.s_smoothing(gaussian(grid), s)


def test_smoothing_norm_decreases(grid):
    f = gaussian(grid)
    norms = [sp.s_smoothing(f, s).norm() for s in (1.0, 1e2, 1e4)]
    assert norms[0] > norms[1] > norms[2]


def test_s_kernel_per_mode():
    g = make_grid(4096, 200.0)
    assert np.max(np.abs(sp.s_kernel(g.rho) / g.rho - 1)) <= 1e-10


def test_smoothed_half_norm_identity(grid):
    f = gaussian(grid, 0, 1.5) * np.cos(grid.r)
    assert sp.smoothed_half_norm_sq(f) == pytest.approx(sp.half_norm_sq(f), rel=1e-6)


@settings(max_examples=15, deadline=None)
@given(width=st.floats(0.3, 4.0), freq=st.floats(0.0, 3.0), phase=st.floats(0, 2 * np.pi))
def test_smoothed_half_norm_identity_property(width, freq, phase):
    g = make_grid(512, 40.0)
    f = field(g, lambda r: np.exp(-(r / width) ** 2) * np.cos(freq * r + phase))
    if f.norm() == 0:
        return
    assert sp.smoothed_half_norm_sq(f) == pytest.approx(sp.half_norm_sq(f), rel=1e-6)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), width=st.floats(0.5, 3.0))
def test_norm_real_space_equals_spectral(a, b, width):
    g = make_grid(512, 40.0)
    f = field(g, lambda r: (a + 1j * b) * np.exp(-(r / width) ** 2))
    assert f.norm() == pytest.approx(f.norm_spectral(), rel=1e-10, abs=1e-300)
