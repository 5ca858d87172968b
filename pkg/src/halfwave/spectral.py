"""Radial pseudo-spectral representation of functions on R^3.

Two angular sectors are supported.  Sector 0 holds radial functions f(r);
internally the sine series of g = r f diagonalises D = |grad| exactly.  Sector
1 holds one Cartesian component f(r) x_3/r of an odd field; its transform is
a dense spherical-Bessel (j_1) quadrature.

Normalisation: spectral coefficients are samples of the unitary 3D Fourier
transform, fhat(rho_k), at rho_k = k pi / r_max.  For sector 1 the stored
coefficient is F(rho) with  fhat(xi) = -i (xi_3/|xi|) F(|xi|).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.fft as sfft
from scipy.special import spherical_jn

from .errors import ConfigurationError, DomainError, NumericError

SECTORS = (0, 1)
# solid-angle weight of one component x_j/r of a sector-1 field
ANGULAR_WEIGHT = {0: 4.0 * np.pi, 1: 4.0 * np.pi / 3.0}


class RadialGrid:
    """Uniform radial mesh r_j = j h, h = r_max/(n+1), j = 1..n.

    Instances are immutable and cached per (n, r_max); use :func:`make_grid`.
    """

    def __init__(self, n: int, r_max: float):
        if int(n) != n or n < 16:
            raise ConfigurationError(f"grid needs n >= 16, got {n}")
        if not r_max > 0:
            raise ConfigurationError(f"grid needs r_max > 0, got {r_max}")
        self.n = int(n)
        self.r_max = float(r_max)
        self.h = self.r_max / (self.n + 1)
        self.r = self.h * np.arange(1, self.n + 1)
        self.drho = np.pi / self.r_max
        self.rho = self.drho * np.arange(1, self.n + 1)
        self.r.setflags(write=False)
        self.rho.setflags(write=False)

    def __repr__(self):
        return f"RadialGrid(n={self.n}, r_max={self.r_max})"

    def __eq__(self, other):
        return isinstance(other, RadialGrid) and (self.n, self.r_max) == (other.n, other.r_max)

    def __hash__(self):
        return hash((self.n, self.r_max))

    def weights(self, sector: int = 0) -> np.ndarray:
        """Real-space quadrature weights: (f, g) = sum(w conj(f) g)."""
        return ANGULAR_WEIGHT[sector] * self.h * self.r**2

    # -- sector-1 dense Hankel pair ------------------------------------
    @functools.cached_property
    def _j1(self) -> np.ndarray:
        j1 = spherical_jn(1, np.outer(self.rho, self.r))
        j1.setflags(write=False)
        return j1

    @functools.cached_property
    def hankel_forward(self) -> np.ndarray:
        """F_k = sqrt(2/pi) h sum_j r_j^2 j1(rho_k r_j) f_j."""
        m = np.sqrt(2 / np.pi) * self.h * self._j1 * self.r[None, :] ** 2
        m.setflags(write=False)
        return m

    @functools.cached_property
    def hankel_inverse(self) -> np.ndarray:
        """f_j = sqrt(2/pi) drho sum_k rho_k^2 j1(rho_k r_j) F_k."""
        m = np.sqrt(2 / np.pi) * self.drho * (self._j1 * self.rho[:, None] ** 2).T
        m.setflags(write=False)
        return m

    @functools.cached_property
    def hankel_inverse_derivative(self) -> np.ndarray:
        """Radial derivative of the inverse Hankel series at the nodes."""
        x = np.outer(self.r, self.rho)
        j0 = spherical_jn(0, x)
        j1 = self._j1.T
        dj1 = j0 - 2.0 * j1 / x
        m = np.sqrt(2 / np.pi) * self.drho * dj1 * self.rho[None, :] ** 3
        m.setflags(write=False)
        return m


@functools.lru_cache(maxsize=16)
def make_grid(n: int, r_max: float) -> RadialGrid:
    return RadialGrid(n, r_max)


ArrayLike = Union[np.ndarray, float, complex]


@dataclass(frozen=True, eq=False)
class SectorField:
    """Complex samples of one radial profile on a grid, tagged by sector."""

    grid: RadialGrid
    sector: int
    values: np.ndarray

    def __post_init__(self):
        if self.sector not in SECTORS:
            raise ConfigurationError(f"unsupported sector {self.sector}")
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.n,):
            raise ConfigurationError(
                f"field has shape {v.shape}, grid expects ({self.grid.n},)")
        object.__setattr__(self, "values", v)

    # light arithmetic; sector-0 fields act as pointwise radial weights
    def _other(self, other):
        if isinstance(other, SectorField):
            if other.grid != self.grid:
                raise ConfigurationError("fields live on different grids")
            return other
        return None

    def __add__(self, other):
        o = self._other(other)
        if o is None:
            return NotImplemented
        if o.sector != self.sector:
            raise ConfigurationError("cannot add fields from different sectors")
        return SectorField(self.grid, self.sector, self.values + o.values)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __neg__(self):
        return (-1.0) * self

    def __mul__(self, other):
        o = self._other(other)
        if o is not None:
            if self.sector == 1 and o.sector == 1:
                raise ConfigurationError("product of two sector-1 fields leaves the sector")
            return SectorField(self.grid, max(self.sector, o.sector), self.values * o.values)
        if np.ndim(other) == 0 or np.shape(other) == (self.grid.n,):
            return SectorField(self.grid, self.sector, self.values * other)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (1.0 / other)

    @property
    def real(self):
        return SectorField(self.grid, self.sector, self.values.real)

    @property
    def imag(self):
        return SectorField(self.grid, self.sector, self.values.imag)

    def conj(self):
        return SectorField(self.grid, self.sector, self.values.conj())

    def norm(self) -> float:
        return float(np.sqrt(abs(inner_product(self, self))))

    def norm_spectral(self) -> float:
        return float(np.sqrt(abs(inner_product_spectral(self, self))))

    def with_values(self, values) -> "SectorField":
        return SectorField(self.grid, self.sector, values)


def field(grid: RadialGrid, func_or_values, sector: int = 0) -> SectorField:
    """Build a field from a callable of r or from raw samples."""
    if callable(func_or_values):
        return SectorField(grid, sector, func_or_values(grid.r))
    return SectorField(grid, sector, func_or_values)


def zeros(grid: RadialGrid, sector: int = 0) -> SectorField:
    return SectorField(grid, sector, np.zeros(grid.n, dtype=complex))


def _check_same(f: SectorField, g: SectorField):
    if f.grid != g.grid:
        raise ConfigurationError("fields live on different grids")
    if f.sector != g.sector:
        raise ConfigurationError(f"sector mismatch: {f.sector} vs {g.sector}")


# -- sector-0 sine machinery ---------------------------------------------

def _rmatvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Real matrix times possibly complex vector without upcasting the matrix."""
    if np.iscomplexobj(v):
        return m @ v.real + 1j * (m @ v.imag)
    return m @ v


def _dst(x):
    return sfft.dst(x, type=1, norm="ortho")


def _sine_derivative(grid: RadialGrid, coeffs: np.ndarray) -> np.ndarray:
    """d/dr of the sine interpolant whose orthonormal DST-I coefficients are given."""
    pad = np.zeros(grid.n + 2, dtype=complex)
    pad[1:-1] = coeffs * grid.rho
    # DCT-I with zero end coefficients gives 2 sum_k x_k cos(pi k j/(n+1))
    dc = sfft.dct(pad.real, type=1) + 1j * sfft.dct(pad.imag, type=1)
    return 0.5 * np.sqrt(2.0 / (grid.n + 1)) * dc[1:-1]


def forward_transform(f: SectorField) -> np.ndarray:
    """Samples of the Fourier transform at rho_k (see module docstring)."""
    grid = f.grid
    if f.sector == 0:
        g = grid.r * f.values
        return np.sqrt(2 / np.pi) * grid.h / grid.rho * 0.5 * sfft.dst(g, type=1)
    if f.sector == 1:
        return _rmatvec(grid.hankel_forward, f.values)
    raise ConfigurationError(f"unsupported sector {f.sector}")


def inverse_transform(grid: RadialGrid, coeffs: np.ndarray, sector: int = 0) -> SectorField:
    coeffs = np.asarray(coeffs, dtype=complex)
    if coeffs.shape != (grid.n,):
        raise ConfigurationError("coefficient vector does not match grid")
    if sector == 0:
        g = np.sqrt(2 / np.pi) * grid.drho * 0.5 * sfft.dst(grid.rho * coeffs, type=1)
        return SectorField(grid, 0, g / grid.r)
    if sector == 1:
        return SectorField(grid, 1, _rmatvec(grid.hankel_inverse, coeffs))
    raise ConfigurationError(f"unsupported sector {sector}")


# -- multipliers ---------------------------------------------------------

Symbol = Union[Callable[[np.ndarray], np.ndarray], np.ndarray]


@dataclass(frozen=True)
class MultiplierSpec:
    """A Fourier multiplier m(rho), evaluated pointwise on the spectral nodes."""

    symbol: Callable[[np.ndarray], np.ndarray]
    name: str = "m"

    def on(self, grid: RadialGrid) -> np.ndarray:
        vals = np.asarray(self.symbol(grid.rho))
        if vals.shape == ():
            vals = np.full(grid.n, vals)
        bad = np.flatnonzero(~np.isfinite(vals))
        if bad.size:
            raise NumericError(
                f"multiplier {self.name} is not finite at mode {bad[0] + 1}", int(bad[0] + 1))
        return vals

    def __mul__(self, other: "MultiplierSpec") -> "MultiplierSpec":
        a, b = self.symbol, other.symbol
        return MultiplierSpec(lambda rho: a(rho) * b(rho), f"{self.name}*{other.name}")


D_SYMBOL = MultiplierSpec(lambda rho: rho, "D")


def propagator(tau: float) -> MultiplierSpec:
    return MultiplierSpec(lambda rho: np.exp(-1j * tau * rho), f"exp(-i{tau}D)")


def resolvent_d(shift: float = 1.0) -> MultiplierSpec:
    return MultiplierSpec(lambda rho: 1.0 / (rho + shift), f"(D+{shift})^-1")


def resolvent_laplace(s: float) -> MultiplierSpec:
    return MultiplierSpec(lambda rho: 1.0 / (rho**2 + s), f"(-lap+{s})^-1")


def apply_multiplier(f: SectorField, m: Union[MultiplierSpec, np.ndarray]) -> SectorField:
    grid = f.grid
    vals = m.on(grid) if isinstance(m, MultiplierSpec) else np.asarray(m)
    if isinstance(m, np.ndarray):
        bad = np.flatnonzero(~np.isfinite(vals))
        if bad.size:
            raise NumericError(f"multiplier not finite at mode {bad[0] + 1}", int(bad[0] + 1))
    if f.sector == 0:
        g = grid.r * f.values
        return SectorField(grid, 0, _dst(vals * _dst(g)) / grid.r)
    return SectorField(grid, 1, _rmatvec(grid.hankel_inverse, vals * _rmatvec(grid.hankel_forward, f.values)))


def apply_d(f: SectorField, power: float = 1.0) -> SectorField:
    if power == 1.0:
        return apply_multiplier(f, D_SYMBOL.on(f.grid))
    return apply_multiplier(f, f.grid.rho ** power)


# -- inner products ------------------------------------------------------

def inner_product(f: SectorField, g: SectorField) -> complex:
    """(f, g) = int conj(f) g over R^3 (one Cartesian component for sector 1)."""
    _check_same(f, g)
    return complex(np.sum(f.grid.weights(f.sector) * f.values.conj() * g.values))


def inner_product_spectral(f: SectorField, g: SectorField) -> complex:
    _check_same(f, g)
    grid = f.grid
    F, G = forward_transform(f), forward_transform(g)
    w = ANGULAR_WEIGHT[f.sector] * grid.drho * grid.rho**2
    return complex(np.sum(w * F.conj() * G))


def half_norm_sq(f: SectorField) -> float:
    """||D^{1/2} f||_2^2 = (f, D f)."""
    return float(inner_product(f, apply_d(f)).real)


# -- derivatives and the scaling generator --------------------------------

def _fd4_derivative(grid: RadialGrid, v: np.ndarray) -> np.ndarray:
    """Centered 4th-order d/dr of an odd-in-r profile vanishing past r_max."""
    h = grid.h
    ext = np.concatenate([-v[1::-1], [0.0], v, [0.0, 0.0]])
    # ext index i <-> node j = i - 2  (j = -2..n+2)
    i = np.arange(3, grid.n + 3)
    return (ext[i - 2] - 8 * ext[i - 1] + 8 * ext[i + 1] - ext[i + 2]) / (12 * h)


def radial_derivative(f: SectorField) -> SectorField:
    """d f / d r of the radial profile (spectral for sector 0, 4th-order FD for 1)."""
    grid = f.grid
    if f.sector == 0:
        g = grid.r * f.values
        gp = _sine_derivative(grid, _dst(g))
        return SectorField(grid, 0, (gp - f.values) / grid.r)
    return SectorField(grid, 1, _fd4_derivative(grid, f.values))


def radial_derivative_spectral(f: SectorField) -> SectorField:
    """Spectral d/dr for either sector (sector 1 via the Hankel series)."""
    grid = f.grid
    if f.sector == 0:
        return radial_derivative(f)
    return SectorField(grid, 1, _rmatvec(grid.hankel_inverse_derivative,
                                         _rmatvec(grid.hankel_forward, f.values)))


def gradient_component(f: SectorField) -> SectorField:
    """Radial part of d/dx_3 of a radial field: a sector-1 field."""
    if f.sector != 0:
        raise ConfigurationError("gradient_component maps sector 0 to sector 1")
    return SectorField(f.grid, 1, radial_derivative(f).values)


def lambda_op(f: SectorField) -> SectorField:
    """Scaling generator (3/2) f + x . grad f, sector-wise."""
    grid = f.grid
    if f.sector == 0:
        g = grid.r * f.values
        gp = _sine_derivative(grid, _dst(g))
        return SectorField(grid, 0, 0.5 * f.values + gp)
    df = _fd4_derivative(grid, f.values)
    return SectorField(grid, 1, 1.5 * f.values + grid.r * df)


def rescale(f: SectorField, lam: float) -> SectorField:
    """L^2-invariant rescaling f_lam(x) = lam^{3/2} f(lam x) via exact series evaluation."""
    return SectorField(f.grid, f.sector, lam**1.5 * evaluate(f, lam * f.grid.r))


def evaluate(f: SectorField, radii: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Evaluate the spectral interpolant of ``f`` at arbitrary radii (zero beyond r_max)."""
    grid = f.grid
    radii = np.asarray(radii, dtype=float)
    out = np.zeros(radii.shape, dtype=complex)
    inside = (radii > 0) & (radii < grid.r_max)
    rr = radii[inside]
    if f.sector == 0:
        c = _dst(grid.r * f.values) * np.sqrt(2.0 / (grid.n + 1))
        vals = np.empty(rr.shape, dtype=complex)
        for a in range(0, rr.size, chunk):
            seg = rr[a:a + chunk]
            vals[a:a + chunk] = np.sin(np.outer(seg, grid.rho)) @ c / seg
        out[inside] = vals
        # r = 0 limit of g/r
        zero = radii == 0
        if np.any(zero):
            out[zero] = np.sum(c * grid.rho)
        return out
    F = _rmatvec(grid.hankel_forward, f.values)
    coef = np.sqrt(2 / np.pi) * grid.drho * grid.rho**2 * F
    vals = np.empty(rr.shape, dtype=complex)
    for a in range(0, rr.size, chunk):
        seg = rr[a:a + chunk]
        vals[a:a + chunk] = spherical_jn(1, np.outer(seg, grid.rho)) @ coef
    out[inside] = vals
    return out


# -- resolvent smoothing and the sqrt(s) quadrature -----------------------

def s_smoothing(f: SectorField, s: float) -> SectorField:
    """u_s = sqrt(2/pi) (-Laplace + s)^{-1} u."""
    if not s > 0:
        raise DomainError(f"smoothing parameter must be positive, got {s}")
    return apply_multiplier(f, np.sqrt(2 / np.pi) / (f.grid.rho**2 + s))


@functools.lru_cache(maxsize=8)
def s_quadrature(nodes: int = 200):
    """Nodes and weights for int_0^inf ds via s = tan^2(pi xi / 2), Gauss-Legendre in xi."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    xi = 0.5 * (x + 1.0)
    wx = 0.5 * w
    t = np.tan(0.5 * np.pi * xi)
    s = t**2
    ds = np.pi * t * (1.0 + t**2)
    return s, wx * ds


def s_kernel(rho: np.ndarray, nodes: int = 200) -> np.ndarray:
    """Quadrature of (2/pi) int sqrt(s) rho^2/(rho^2+s)^2 ds; exact value is rho."""
    s, w = s_quadrature(nodes)
    rho = np.asarray(rho, dtype=float)[..., None]
    return (2 / np.pi) * np.sum(w * np.sqrt(s) * rho**2 / (rho**2 + s) ** 2, axis=-1)


def gradient_norm_sq(f: SectorField) -> float:
    """int |grad f|^2 dx evaluated in real space."""
    grid = f.grid
    if f.sector == 0:
        df = radial_derivative(f).values
        return float(np.sum(grid.weights(0) * np.abs(df) ** 2))
    df = radial_derivative_spectral(f).values
    # |grad(f x3/r)|^2 integrates to (4pi/3)(|f'|^2 + 2|f|^2/r^2) r^2
    return float(np.sum(grid.weights(1) * (np.abs(df) ** 2 + 2 * np.abs(f.values / grid.r) ** 2)))


def smoothed_half_norm_sq(f: SectorField, nodes: int = 200) -> float:
    """int_0^inf sqrt(s) ||grad u_s||^2 ds by s-quadrature and real-space gradients."""
    s, w = s_quadrature(nodes)
    total = 0.0
    for sk, wk in zip(s, w):
        total += wk * np.sqrt(sk) * gradient_norm_sq(s_smoothing(f, sk))
    return float(total)
