"""Localised-energy diagnostics: cutoff family, smoothed quadratic forms, coercivity,
the biharmonic-weight bound and the J_A / H functionals.

Conventions.  The cutoff profile phi has p = phi' with p(x) = x on [0, 1],
p(x) = 3 - exp(-x) for x >= 2 and a quintic Hermite bridge in between.  At scale
A the radial fields are evaluated at y = r/(A lam):

    grad phi_A = A lam p(y),  lap phi_A = (lap phi)(y),  lap^2 phi_A = (lap^2 phi)(y)/(A lam)^2,

so lap phi_A equals 3 on the core r <= A lam.

Smoothed kinetic terms int sqrt(s) int W |grad u_s|^2 ds use u_s = sqrt(2/pi)(-lap + s)^{-1} u.
Because int_0^inf sqrt(s) ds / ((a + s)(b + s)) = pi/(sqrt a + sqrt b), the s-integral
of a product of two smoothed modes is exactly 2/(rho_k + rho_k').  Dense form
matrices use that kernel; single-field evaluations use the s-quadrature.
"""

from __future__ import annotations

import functools
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np
from scipy.interpolate import BPoly
from scipy.linalg import eigh, null_space

from . import spectral as sp
from .errors import ConstructionError, DomainError, ToleranceError
from .ground_state import GroundState, nonlinearity
from .linearized import COUPLING, LinearizedOperator, min_eigenvalue_projected, solve_constrained
from .spectral import RadialGrid, SectorField

# potential coefficients of the two quadratic forms per mode
PRINTED_COEFFICIENTS = {"plus": 3.0 / 8.0, "minus": 1.0}
CONSISTENT_COEFFICIENTS = dict(COUPLING)
MODES = ("printed", "consistent")
CORE_LAPLACIAN = 3.0
CONVEXITY_SAMPLES = 10_000
A_SWEEP = (8.0, 16.0, 32.0, 64.0)


# -- cutoff family -----------------------------------------------------------------

@functools.lru_cache(maxsize=1)
def _bridge() -> BPoly:
    e2 = np.exp(-2.0)
    return BPoly.from_derivatives([1.0, 2.0], [[1.0, 1.0, 0.0], [3.0 - e2, e2, -e2]])


def _p(x: np.ndarray, order: int) -> np.ndarray:
    """order-th derivative of p = phi' at x >= 0."""
    x = np.asarray(x, dtype=float)
    core = {0: x, 1: np.ones_like(x), 2: np.zeros_like(x), 3: np.zeros_like(x)}[order]
    ex = np.exp(-x)
    tail = {0: 3.0 - ex, 1: ex, 2: -ex, 3: ex}[order]
    bridge = _bridge().derivative(order)(np.clip(x, 1.0, 2.0)) if order else _bridge()(np.clip(x, 1.0, 2.0))
    return np.where(x <= 1.0, core, np.where(x >= 2.0, tail, bridge))


def phi_prime(x):
    return _p(x, 0)


def phi_second(x):
    return _p(x, 1)


def laplacian_phi(x):
    """p' + 2p/x, with value 3 at the origin."""
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, _p(x, 1) + 2.0 * _p(x, 0) / safe, CORE_LAPLACIAN)


def bilaplacian_phi(x):
    """p''' + 4p''/x, identically zero on the core."""
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, _p(x, 3) + 4.0 * _p(x, 2) / safe, 0.0)


def phi(x):
    """phi(x) = int_0^x p, with phi(0) = 0."""
    x = np.asarray(x, dtype=float)
    e2 = np.exp(-2.0)
    anti = _bridge().antiderivative()
    at2 = 0.5 + anti(2.0) - anti(1.0)
    core = 0.5 * x**2
    bridge = 0.5 + anti(np.clip(x, 1.0, 2.0)) - anti(1.0)
    tail = at2 + 3.0 * (x - 2.0) + np.exp(-x) - e2
    return np.where(x <= 1.0, core, np.where(x >= 2.0, tail, bridge))


@dataclass(frozen=True)
class CutoffFamily:
    A: float
    lam: float
    grid: RadialGrid
    grad_phi: np.ndarray  # radial component of A lam grad phi(r/(A lam))
    lap_phi: np.ndarray
    bilap_phi: np.ndarray
    bridge_coefficients: tuple
    min_phi_second: float

    @property
    def scale(self):
        return self.A * self.lam


def check_convexity(samples: int = CONVEXITY_SAMPLES, x_max: float = 10.0) -> float:
    x = np.linspace(0.0, x_max, samples)
    return float(np.min(phi_second(x)))


def build_cutoff(A: float, grid: RadialGrid, lam: float = 1.0) -> CutoffFamily:
    if not A > 0 or not lam > 0:
        raise DomainError(f"cutoff needs A > 0 and lam > 0, got A = {A}, lam = {lam}")
    m = check_convexity()
    if m < 0:
        raise ConstructionError(f"bridge violates phi'' >= 0 (min {m:.3e})")
    scale = A * lam
    y = grid.r / scale
    return CutoffFamily(
        A=float(A), lam=float(lam), grid=grid,
        grad_phi=scale * phi_prime(y),
        lap_phi=laplacian_phi(y),
        bilap_phi=bilaplacian_phi(y) / scale**2,
        bridge_coefficients=tuple(np.ravel(_bridge().c)),
        min_phi_second=m,
    )


# -- s-quadrature evaluations --------------------------------------------------------

def weighted_gradient_sq(f: SectorField, weight: np.ndarray) -> float:
    """int W |grad f|^2 dx for a radial weight W."""
    grid = f.grid
    if f.sector == 0:
        df = sp.radial_derivative(f).values
        return float(np.sum(grid.weights(0) * weight * np.abs(df) ** 2))
    df = sp.radial_derivative_spectral(f).values
    dens = np.abs(df) ** 2 + 2 * np.abs(f.values / grid.r) ** 2
    return float(np.sum(grid.weights(1) * weight * dens))


def smoothed_kinetic(f: SectorField, weight: np.ndarray, nodes: int = 200) -> float:
    """int_0^inf sqrt(s) int W |grad f_s|^2 dx ds by s-quadrature."""
    s, w = sp.s_quadrature(nodes)
    return float(sum(wk * np.sqrt(sk) * weighted_gradient_sq(sp.s_smoothing(f, sk), weight)
                     for sk, wk in zip(s, w)))


def smoothed_mass(f: SectorField, weight: np.ndarray, nodes: int = 200) -> float:
    """int_0^inf sqrt(s) int W |f_s|^2 dx ds by s-quadrature."""
    s, w = sp.s_quadrature(nodes)
    wts = f.grid.weights(f.sector) * weight
    return float(sum(wk * np.sqrt(sk) * np.sum(wts * np.abs(sp.s_smoothing(f, sk).values) ** 2)
                     for sk, wk in zip(s, w)))


def _coefficient(kind: str, mode: str) -> float:
    if kind not in ("plus", "minus"):
        raise DomainError(f"form kind must be plus or minus, got {kind!r}")
    if mode == "printed":
        return PRINTED_COEFFICIENTS[kind]
    if mode == "consistent":
        return CONSISTENT_COEFFICIENTS[kind]
    raise DomainError(f"coefficient mode must be one of {MODES}, got {mode!r}")


def _kinetic_weight(cut: CutoffFamily, mode: str) -> np.ndarray:
    # consistent mode divides by the core value so the flat limit is (D eps, eps)
    return cut.lap_phi / CORE_LAPLACIAN if mode == "consistent" else cut.lap_phi


@dataclass(frozen=True)
class FormValue:
    kind: str
    mode: str
    A: float
    value: float
    kinetic: float
    mass: float
    potential: float
    flat_limit: float
    quadrature_check: float

    @property
    def truncation_gap(self) -> float:
        return self.value - self.flat_limit


def quadratic_form(eps: SectorField, Q: SectorField, A: float, kind: str = "plus",
                   mode: str = "consistent", nodes: int = 200, check_tol: float = 1e-6) -> FormValue:
    """L_{+,A}(eps) or L_{-,A}(eps) for a real field eps.

    flat_limit replaces the cutoff weight by its core value, i.e. c (D eps, eps) + ...
    with c = 1 in consistent mode and 3 in printed mode.
    """
    c = _coefficient(kind, mode)
    cut = build_cutoff(A, eps.grid)
    weight = _kinetic_weight(cut, mode)
    kin = smoothed_kinetic(eps, weight, nodes)
    mass = eps.norm() ** 2
    pot = float(np.sum(eps.grid.weights(eps.sector) * np.abs(Q.values) ** (2 / 3)
                       * np.abs(eps.values) ** 2))
    core = 1.0 if mode == "consistent" else CORE_LAPLACIAN
    half = sp.half_norm_sq(eps)
    # the same quadrature on a constant weight must reproduce ||D^{1/2} eps||^2
    flat_quad = smoothed_kinetic(eps, np.ones(eps.grid.n), nodes)
    check = abs(flat_quad - half) / max(half, 1e-300)
    if half > 0 and check > check_tol:
        raise ToleranceError(f"s-quadrature off by {check:.2e} relative on the flat weight")
    return FormValue(kind, mode, float(A), kin + mass - c * pot, kin, mass, pot,
                     core * half + mass - c * pot, check)


def a_sweep(eps: SectorField, Q: SectorField, kind: str = "plus", mode: str = "consistent",
            A_values=A_SWEEP, nodes: int = 200) -> dict:
    vals = [quadratic_form(eps, Q, A, kind, mode, nodes) for A in A_values]
    v = np.array([x.value for x in vals])
    cauchy = np.abs(np.diff(v))
    return {"A": list(map(float, A_values)), "values": v.tolist(),
            "flat_limit": vals[-1].flat_limit, "cauchy_differences": cauchy.tolist(),
            "monotone_cauchy": bool(np.all(np.diff(cauchy) <= 0))}


# -- dense form matrices in isometric coordinates ------------------------------------

def _smoothing_kernel(grid: RadialGrid) -> np.ndarray:
    """int_0^inf sqrt(s) sigma_s(rho_k) sigma_s(rho_l) ds = 2/(rho_k + rho_l)."""
    rho = grid.rho
    return 2.0 / (rho[:, None] + rho[None, :])


def _basis_columns(grid: RadialGrid, sector: int, op) -> np.ndarray:
    eye = np.eye(grid.n)
    return np.column_stack([op(sp.inverse_transform(grid, eye[:, k], sector)).values.real
                            for k in range(grid.n)])


def _coordinate_map(grid: RadialGrid, sector: int) -> np.ndarray:
    """Matrix T with spectral coefficients c = T v for isometric samples v = sqrt(w) f."""
    inv_sqrt_w = 1.0 / np.sqrt(grid.weights(sector))
    eye = np.eye(grid.n)
    return np.column_stack([sp.forward_transform(SectorField(grid, sector, eye[:, j] * inv_sqrt_w[j])).real
                            for j in range(grid.n)])


@functools.lru_cache(maxsize=8)
def _form_blocks(grid: RadialGrid, sector: int):
    if sector == 0:
        values = _basis_columns(grid, 0, lambda f: f)
        grads = _basis_columns(grid, 0, sp.radial_derivative)
        T = _coordinate_map(grid, 0)
    else:
        values, grads = grid.hankel_inverse, grid.hankel_inverse_derivative
        T = grid.hankel_forward / np.sqrt(grid.weights(1))[None, :]
    return values, grads, T, _smoothing_kernel(grid)


def smoothed_kinetic_matrix(grid: RadialGrid, sector: int, weight: np.ndarray) -> np.ndarray:
    """Symmetric matrix of v -> int sqrt(s) int W |grad f_s|^2 with f = v/sqrt(w)."""
    values, grads, T, H = _form_blocks(grid, sector)
    w = grid.weights(sector) * weight
    inner = grads.T @ (w[:, None] * grads)
    if sector == 1:
        inner += values.T @ ((2.0 * w / grid.r**2)[:, None] * values)
    m = T.T @ ((inner * H) @ T)
    return 0.5 * (m + m.T)


def smoothed_mass_matrix(grid: RadialGrid, sector: int, weight: np.ndarray) -> np.ndarray:
    """Symmetric matrix of v -> int sqrt(s) int W |f_s|^2 with f = v/sqrt(w)."""
    values, _, T, H = _form_blocks(grid, sector)
    w = grid.weights(sector) * weight
    m = T.T @ (((values.T @ (w[:, None] * values)) * H) @ T)
    return 0.5 * (m + m.T)


def form_matrix(gs: GroundState, kind: str, sector: int, A: float | None,
                mode: str = "consistent") -> np.ndarray:
    """Dense matrix of L_{kind,A}; A = None gives the flat form with the s-integral collapsed."""
    grid = gs.grid
    c = _coefficient(kind, mode)
    if A is None:
        weight = np.full(grid.n, 1.0 if mode == "consistent" else CORE_LAPLACIAN)
    else:
        weight = _kinetic_weight(build_cutoff(A, grid), mode)
    m = smoothed_kinetic_matrix(grid, sector, weight)
    m[np.diag_indices_from(m)] += 1.0 - c * np.abs(gs.Q.values) ** (2 / 3)
    return m


# -- coercivity -------------------------------------------------------------------------

BLOCKS = (("plus", 0), ("plus", 1), ("minus", 0), ("minus", 1))


@dataclass
class CoercivityConstraints:
    """Directions removed in each (kind, sector) block."""
    fields: dict

    @classmethod
    def from_ground_state(cls, gs: GroundState):
        """S10, S01 and rho1 recomputed on the ground-state grid."""
        Lm0 = LinearizedOperator(gs, "minus", 0)
        Lm1 = LinearizedOperator(gs, "minus", 1)
        S10 = solve_constrained(Lm0, sp.lambda_op(gs.Q), solvability_tol=1e-6).solution.real
        S01 = solve_constrained(Lm1, -sp.gradient_component(gs.Q), solvability_tol=1e-6).solution.real
        rho1 = solve_constrained(LinearizedOperator(gs, "plus", 0), S10, solvability_tol=1e-6).solution.real
        return cls.from_fields(gs.Q, S10, S01, rho1)

    @classmethod
    def from_profile_set(cls, ps):
        return cls.from_fields(ps.Q, ps["S10"], ps["S01"], ps.rho1)

    @classmethod
    def from_fields(cls, Q, S10, S01, rho1):
        return cls({("plus", 0): [Q, S10], ("plus", 1): [S01],
                    ("minus", 0): [rho1], ("minus", 1): []})

    def names(self, block):
        return {("plus", 0): ["Q", "S10"], ("plus", 1): ["S01"],
                ("minus", 0): ["rho1"], ("minus", 1): []}[block]


def _projected_min(m: np.ndarray, constraints: list[SectorField]) -> tuple[float, np.ndarray]:
    if constraints:
        c = np.column_stack([np.sqrt(f.grid.weights(f.sector)) * f.values.real for f in constraints])
        P = null_space(c.T)
    else:
        P = np.eye(m.shape[0])
    vals, vecs = eigh(P.T @ m @ P, subset_by_index=[0, 0])
    return float(vals[0]), P @ vecs[:, 0]


@dataclass
class QuadraticFormReport:
    A: float | None
    mode: str
    grid: dict
    constrained: bool
    block_minima: dict
    minimum: float
    argmin_block: str
    eigenvector: np.ndarray = dc_field(repr=False)
    constraint_names: dict = dc_field(default_factory=dict)

    def as_dict(self):
        d = asdict(self)
        d.pop("eigenvector")
        return d


def coercivity_check(gs: GroundState, A: float | None, constraints: CoercivityConstraints | None,
                     mode: str = "consistent") -> QuadraticFormReport:
    """Minimum of L_{+,A}(eps1) + L_{-,A}(eps2) on the unit sphere.

    The forms decouple into (kind, sector) blocks, so the minimum is the smallest
    block minimum.  constraints = None removes nothing.
    """
    if A is not None and A < 8:
        raise DomainError(f"coercivity check needs A >= 8, got {A}")
    minima, vectors, names = {}, {}, {}
    for kind, sector in BLOCKS:
        key = f"{kind}_l{sector}"
        cons = constraints.fields[(kind, sector)] if constraints else []
        names[key] = constraints.names((kind, sector)) if constraints else []
        minima[key], vectors[key] = _projected_min(form_matrix(gs, kind, sector, A, mode), cons)
    worst = min(minima, key=minima.get)
    g = gs.grid
    return QuadraticFormReport(A, mode, {"n": g.n, "r_max": g.r_max}, constraints is not None,
                               minima, minima[worst], worst, vectors[worst], names)


def flat_coercivity_eigensolve(gs: GroundState, constraints: CoercivityConstraints) -> dict:
    """The same block minima from the linearized operators (no s-localisation)."""
    out = {}
    for kind, sector in BLOCKS:
        L = LinearizedOperator(gs, kind, sector)
        vals, _ = min_eigenvalue_projected(L, constraints.fields[(kind, sector)])
        out[f"{kind}_l{sector}"] = float(vals[0])
    return out


# -- biharmonic weight bound --------------------------------------------------------

@dataclass(frozen=True)
class BiharmonicBound:
    A: float
    lhs: float
    bound: float

    @property
    def ratio(self) -> float:
        """lhs A / ||u||^2."""
        return abs(self.lhs) / self.bound if self.bound > 0 else 0.0


def biharmonic_bound(u: SectorField, A: float, nodes: int = 200) -> BiharmonicBound:
    """lhs = int sqrt(s) int lap^2 phi_A |u_s|^2 and bound = ||u||^2 / A."""
    cut = build_cutoff(A, u.grid)
    return BiharmonicBound(float(A), smoothed_mass(u, cut.bilap_phi, nodes), u.norm() ** 2 / A)


def biharmonic_operator_norm(grid: RadialGrid, A: float, sector: int = 0) -> float:
    """sup over u of |lhs| / ||u||^2, from the dense matrix of the smoothed weight."""
    m = smoothed_mass_matrix(grid, sector, build_cutoff(A, grid).bilap_phi)
    vals = np.linalg.eigvalsh(m)
    return float(max(abs(vals[0]), abs(vals[-1])))


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def biharmonic_sweep(grid: RadialGrid, u: SectorField | None = None, A_values=A_SWEEP) -> dict:
    """Worst-case constant and its A-decay slope; optionally the values for one field u."""
    norms = [biharmonic_operator_norm(grid, A) for A in A_values]
    out = {"A": list(map(float, A_values)), "operator_norm": norms,
           "operator_norm_times_A": [n * A for n, A in zip(norms, A_values)],
           "slope": loglog_slope(A_values, norms)}
    if u is not None:
        rows = [biharmonic_bound(u, A) for A in A_values]
        lhs = [abs(r.lhs) for r in rows]
        out["field_lhs"] = lhs
        out["field_ratio"] = [r.ratio for r in rows]
        out["field_slope"] = loglog_slope(A_values, lhs) if min(lhs) > 0 else None
    return out


# -- J_A and H --------------------------------------------------------------------------

def _F(u: np.ndarray) -> np.ndarray:
    return 0.375 * np.abs(u) ** (8 / 3)


def virial_term(ut: SectorField, A: float, lam: float) -> float:
    """Im int A grad phi((x - alpha)/(A lam)) . grad ut conj(ut), radial alpha = 0."""
    if ut.sector != 0:
        raise DomainError("virial term is implemented for radial fields")
    cut = build_cutoff(A, ut.grid, lam)
    # A grad phi(y) has radial component A p(y) = grad_phi / lam
    dens = (cut.grad_phi / lam) * sp.radial_derivative(ut).values * np.conj(ut.values)
    return float(np.sum(ut.grid.weights(0) * dens).imag)


def H_functional(ut: SectorField, lam: float) -> float:
    return sp.half_norm_sq(ut) + ut.norm() ** 2 / lam


def J_and_H(u: SectorField, w: SectorField, b: float, lam: float, A: float) -> dict:
    """J_A(u) and H for ut = u - w."""
    if not lam > 0:
        raise DomainError("scale must be positive")
    ut = u - w
    wts = u.grid.weights(u.sector)
    pot = np.sum(wts * (_F(u.values) - _F(w.values)
                        - np.real(nonlinearity(w.values) * np.conj(ut.values))))
    kin = sp.half_norm_sq(ut)
    vir = virial_term(ut, A, lam)
    J = 0.5 * kin + 0.5 * ut.norm() ** 2 / lam - float(pot) + 0.5 * b * vir
    return {"J_A": float(J), "H": H_functional(ut, lam), "kinetic": kin,
            "potential_remainder": float(pot), "virial": vir}


def virial_ratio(ut: SectorField, A: float, lam: float) -> float:
    """|virial term| / H; the inequality asserts this is bounded."""
    h = H_functional(ut, lam)
    return abs(virial_term(ut, A, lam)) / h if h > 0 else 0.0


def report_entry(check_name: str, inputs: dict, lhs, rhs_or_bound, fitted_constant,
                 grid: RadialGrid, A, passed: bool) -> dict:
    return {"check_name": check_name, "inputs": inputs, "lhs": lhs, "rhs_or_bound": rhs_or_bound,
            "fitted_constant": fitted_constant, "grid": {"n": grid.n, "r_max": grid.r_max},
            "A": A, "pass": bool(passed)}
