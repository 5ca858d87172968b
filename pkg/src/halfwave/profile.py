"""Approximate blowup profile Q_P, its correction fields and the rho system.

The profile is the polynomial

    Q_P = Q + i b S10 + i beta S01 + b beta T11 + b^2 T20 + beta^2 T02
            + i b^3 S30 + i b^2 beta S21 + b^4 T40

with beta = beta_3 only.  Sector-0 fields are radial; sector-1 fields carry
the angular factor mu = x_3/r.  Every correction solves L+ T = Re F_kl or
L- S = Im F_kl, where F_kl is the (k, l) Taylor coefficient of the profile
equation residual with that correction still zero.  Coefficients come from
a discrete Cauchy integral over complex circles in (b, beta): replacing
conj(Q_P) by the polynomial with conjugated coefficient fields makes the
residual holomorphic in (b, beta).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import spectral as sp
from .errors import DomainError, ExpansionInconsistencyError, StencilError
from .ground_state import GroundState
from .linearized import LinearizedOperator, solve_constrained
from .spectral import SectorField

VALIDITY_RANGE = 0.3


@dataclass(frozen=True)
class Term:
    name: str
    b_power: int
    beta_power: int
    sector: int
    imaginary: bool

    @property
    def order(self):
        return (self.b_power, self.beta_power)


ANSATZ = (
    Term("Q", 0, 0, 0, False),
    Term("S10", 1, 0, 0, True),
    Term("S01", 0, 1, 1, True),
    Term("T20", 2, 0, 0, False),
    Term("T11", 1, 1, 1, False),
    Term("T02", 0, 2, 0, False),
    Term("S30", 3, 0, 0, True),
    Term("S21", 2, 1, 1, True),
    Term("T40", 4, 0, 0, False),
)
TERMS = {t.name: t for t in ANSATZ}
# build order after the two first-order solves; each entry is solved from its own coefficient
HIGHER_ORDERS = ("T20", "T11", "T02", "S30", "S21", "T40")


@dataclass(frozen=True)
class ModParams:
    b: float = 0.0
    beta3: float = 0.0

    def __post_init__(self):
        if abs(self.b) > VALIDITY_RANGE or abs(self.beta3) > VALIDITY_RANGE:
            raise DomainError(
                f"(b, beta3) = ({self.b}, {self.beta3}) outside the validity range "
                f"|b|, |beta| <= {VALIDITY_RANGE}")


# -- angular quadrature ----------------------------------------------------

@functools.lru_cache(maxsize=4)
def angular_nodes(count: int = 24):
    mu, w = np.polynomial.legendre.leggauss(count)
    return mu, w


class AngularField:
    """Samples on the (r, mu) product grid; axis 0 is r, axis 1 is mu."""

    def __init__(self, grid, values, mu_count: int = 24):
        self.grid = grid
        self.mu, self.mu_weights = angular_nodes(mu_count)
        self.values = np.asarray(values, dtype=complex)

    @classmethod
    def from_sectors(cls, grid, ell0=None, ell1=None, mu_count: int = 24):
        mu, _ = angular_nodes(mu_count)
        vals = np.zeros((grid.n, mu.size), dtype=complex)
        if ell0 is not None:
            vals += np.asarray(ell0)[:, None]
        if ell1 is not None:
            vals += np.asarray(ell1)[:, None] * mu[None, :]
        return cls(grid, vals, mu_count)

    def project(self, ell: int) -> np.ndarray:
        """Legendre coefficient of order ell as a radial profile."""
        pl = np.polynomial.legendre.Legendre.basis(ell)(self.mu)
        return (2 * ell + 1) / 2.0 * (self.values @ (self.mu_weights * pl))

    def l2_norm(self) -> float:
        w = 2 * np.pi * self.grid.h * self.grid.r**2
        return float(np.sqrt(np.sum(w[:, None] * self.mu_weights[None, :] * np.abs(self.values) ** 2)))

    def integrate(self, density: np.ndarray) -> complex:
        w = 2 * np.pi * self.grid.h * self.grid.r**2
        return complex(np.sum(w[:, None] * self.mu_weights[None, :] * density))


def _x3_derivative(f: SectorField, mu: np.ndarray) -> np.ndarray:
    """d/dx_3 of f (sector 0: f(r); sector 1: f(r) mu) on the (r, mu) grid."""
    df = sp.radial_derivative(f).values
    if f.sector == 0:
        return df[:, None] * mu[None, :]
    g_over_r = f.values / f.grid.r
    return g_over_r[:, None] + (df - g_over_r)[:, None] * mu[None, :] ** 2


@dataclass
class _TermCache:
    """Per-term samples on the angular grid."""

    value: np.ndarray
    d_plus_one: np.ndarray
    scaling: np.ndarray
    x3_derivative: np.ndarray


@dataclass
class ProfileSet:
    gs: GroundState
    fields: dict
    e1: float
    p1: float
    rho1: SectorField
    rho2_b: SectorField
    rho2_beta: SectorField
    diagnostics: dict = dc_field(default_factory=dict)
    mu_count: int = 24

    @property
    def grid(self):
        return self.gs.grid

    @property
    def Q(self):
        return self.gs.Q

    def __getitem__(self, name) -> SectorField:
        return self.fields[name]

    # evaluation helpers
    def assemble(self, params: ModParams):
        return assemble_Q_P(params, self)

    def residual(self, params: ModParams):
        return residual_Phi(params, self)


# -- residual of the profile equation ----------------------------------------

class ProfileEquation:
    """Holomorphic continuation of the profile-equation residual F(b, beta).

    F = -i (b^2/2) d_b Q_P - i b beta d_beta Q_P - (D + 1) Q_P + i b Lambda Q_P
        - i beta d_3 Q_P + (Q_P conj~(Q_P))^{1/3} Q_P,
    where conj~ conjugates the coefficient fields only.  For real (b, beta)
    this is the usual residual with |Q_P|^{2/3} Q_P; Phi_P = -F.
    """

    def __init__(self, gs: GroundState, fields: dict, mu_count: int = 24):
        self.gs = gs
        self.grid = gs.grid
        self.mu, self.mu_weights = angular_nodes(mu_count)
        self.mu_count = mu_count
        self.fields = dict(fields)
        self._cache = {}
        for name in self.fields:
            self._add(name)

    def _angular(self, f: SectorField) -> np.ndarray:
        if f.sector == 0:
            return np.repeat(f.values[:, None], self.mu.size, axis=1)
        return f.values[:, None] * self.mu[None, :]

    def _add(self, name):
        f = self.fields[name]
        self._cache[name] = _TermCache(
            value=self._angular(f),
            d_plus_one=self._angular(sp.apply_d(f) + f),
            scaling=self._angular(sp.lambda_op(f)),
            x3_derivative=_x3_derivative(f, self.mu),
        )

    def set_field(self, name, f: SectorField):
        self.fields[name] = f
        self._add(name)

    def _monomial(self, term: Term, b, beta, db=0, dbeta=0):
        k, l = term.b_power, term.beta_power
        if db > k or dbeta > l:
            return 0.0
        coef = 1.0
        for j in range(db):
            coef *= k - j
        for j in range(dbeta):
            coef *= l - j
        return coef * b ** (k - db) * beta ** (l - dbeta)

    def _phase(self, term: Term, conjugate=False):
        if not term.imaginary:
            return 1.0
        return -1j if conjugate else 1j

    def evaluate(self, b, beta, holomorphic=True) -> np.ndarray:
        n, m = self.grid.n, self.mu.size
        qp = np.zeros((n, m), dtype=complex)
        qp_tilde = np.zeros((n, m), dtype=complex)
        lin = np.zeros((n, m), dtype=complex)
        for name in self.fields:
            term = TERMS[name]
            c = self._cache[name]
            ph = self._phase(term)
            mono = self._monomial(term, b, beta)
            if mono == 0 and not (term.b_power == 1 or term.beta_power == 1):
                continue
            d_b = self._monomial(term, b, beta, db=1)
            d_beta = self._monomial(term, b, beta, dbeta=1)
            qp += ph * mono * c.value
            qp_tilde += self._phase(term, True) * mono * c.value
            lin += ph * (-0.5j * b**2 * d_b - 1j * b * beta * d_beta) * c.value
            lin += ph * mono * (-c.d_plus_one + 1j * b * c.scaling - 1j * beta * c.x3_derivative)
        if holomorphic:
            nl = np.power(qp * qp_tilde, 1.0 / 3.0) * qp
        else:
            nl = np.abs(qp) ** (2.0 / 3.0) * qp
        return lin + nl

    def assemble(self, b, beta):
        """Sector profiles (ell0, ell1) of Q_P and of its b- and beta-derivatives."""
        n = self.grid.n
        out = {key: [np.zeros(n, dtype=complex), np.zeros(n, dtype=complex)]
               for key in ("value", "d_b", "d_beta")}
        for name, f in self.fields.items():
            term = TERMS[name]
            ph = self._phase(term)
            for key, kw in (("value", {}), ("d_b", {"db": 1}), ("d_beta", {"dbeta": 1})):
                out[key][f.sector] += ph * self._monomial(term, b, beta, **kw) * f.values
        return out

    def taylor_coefficient(self, k: int, l: int, radius: float = 0.05, points: int = 16) -> np.ndarray:
        """(k, l) Taylor coefficient of F by the trapezoid rule on |b| = |beta| = radius."""
        w = np.exp(2j * np.pi * np.arange(points) / points)
        acc = np.zeros((self.grid.n, self.mu.size), dtype=complex)
        # a direction of order zero only needs the origin
        b_nodes = radius * w if k > 0 else np.zeros(1)
        beta_nodes = radius * w if l > 0 else np.zeros(1)
        for i, bb in enumerate(b_nodes):
            for j, be in enumerate(beta_nodes):
                acc += w[i % points] ** (-k) * w[j % points] ** (-l) * self.evaluate(bb, be)
        acc /= len(b_nodes) * len(beta_nodes)
        return acc / radius ** (k + l)


def extract_coefficient(eq: ProfileEquation, k: int, l: int, radius: float = 0.05,
                        points: int = 16, rel_tol: float = 1e-6):
    """Taylor coefficient with a two-radius consistency check.

    Aliasing from higher orders scales like radius^points and round-off like
    radius^-(k+l); agreement of the two radii certifies both are negligible.
    """
    a = eq.taylor_coefficient(k, l, radius, points)
    c = eq.taylor_coefficient(k, l, radius / 2, points)
    scale = max(np.max(np.abs(a)), 1e-300)
    diff = float(np.max(np.abs(a - c)) / scale)
    if diff > rel_tol:
        raise StencilError(f"Taylor coefficient ({k},{l}) unstable between radii: {diff:.2e}")
    return c, diff


# -- building ------------------------------------------------------------------

def build_first_order(gs: GroundState):
    """S10 and S01 from L- S10 = Lambda Q and L- S01 = -grad Q, both orthogonal to Q."""
    Q = gs.Q
    Lm0 = LinearizedOperator(gs, "minus", 0)
    Lm1 = LinearizedOperator(gs, "minus", 1)
    s10 = solve_constrained(Lm0, sp.lambda_op(Q))
    s01 = solve_constrained(Lm1, -sp.gradient_component(Q))
    S10 = s10.solution.real
    S01 = s01.solution.real
    e1 = 0.5 * sp.inner_product(Lm0.apply(S10), S10).real
    p1 = 2.0 * sp.inner_product(Lm1.apply(S01), S01).real
    info = {
        "S10_residual": s10.residual,
        "S01_residual": s01.residual,
        "S10_dot_Q": abs(sp.inner_product(S10, Q)),
        "e1": e1,
        "e1_alt": 0.5 * sp.inner_product(sp.lambda_op(Q), S10).real,
        "p1": p1,
        "p1_alt": -2.0 * sp.inner_product(sp.gradient_component(Q), S01).real,
    }
    return {"S10": S10, "S01": S01}, e1, p1, info


def _kernel_fields(gs, kind, sector):
    return LinearizedOperator(gs, kind, sector).kernel()


def build_higher_orders(gs: GroundState, first: dict, mu_count: int = 24, radius: float = 0.05,
                        points: int = 16, solvability_tol: float = 1e-4,
                        l2_flag: float = 0.05):
    """Solve for T20, T11, T02, S30, S21, T40 in sequence."""
    fields = {"Q": gs.Q, **first}
    eq = ProfileEquation(gs, fields, mu_count)
    ops = {(kind, s): LinearizedOperator(gs, kind, s) for kind in ("plus", "minus") for s in (0, 1)}
    info = {}
    for name in HIGHER_ORDERS:
        term = TERMS[name]
        k, l = term.order
        coeff, stencil_diff = extract_coefficient(eq, k, l, radius, points)
        ang = AngularField(gs.grid, coeff, mu_count)
        sector_part = ang.project(term.sector)
        rhs_vals = sector_part.imag if term.imaginary else sector_part.real
        wrong_vals = sector_part.real if term.imaginary else sector_part.imag
        L = ops[("minus" if term.imaginary else "plus", term.sector)]
        rhs = SectorField(gs.grid, term.sector, rhs_vals)
        kernel_proj = 0.0
        for kf in L.kernel():
            kernel_proj = max(kernel_proj, abs(sp.inner_product(kf, rhs)) / (kf.norm() * rhs.norm()))
        if kernel_proj > solvability_tol:
            raise ExpansionInconsistencyError(
                f"order ({k},{l}) right-hand side not orthogonal to ker L "
                f"(relative projection {kernel_proj:.3e})", order=(k, l),
                inner_product=kernel_proj)
        sol = solve_constrained(L, rhs, solvability_tol=solvability_tol)
        f = sol.solution.real
        eq.set_field(name, f)
        entry = {
            "order": [k, l],
            "residual": sol.residual,
            "solvability_projection": kernel_proj,
            "stencil_difference": stencil_diff,
            "parity_leak": float(np.linalg.norm(wrong_vals) / max(np.linalg.norm(rhs_vals), 1e-300)),
        }
        other = 1 - term.sector
        entry["other_sector_norm"] = float(np.linalg.norm(ang.project(other)) /
                                           max(np.linalg.norm(sector_part), 1e-300))
        if name == "T02":
            dropped = ang.project(2)
            ratio = float(np.linalg.norm(dropped * gs.grid.r) /
                          max(np.linalg.norm(sector_part * gs.grid.r), 1e-300))
            entry["dropped_l2_ratio"] = ratio
            entry["dropped_l2_flag"] = ratio > l2_flag
        info[name] = entry
    return eq, info


def build_rho(gs: GroundState, fields: dict):
    """rho1 from L+ rho1 = S10; rho2 = b rho2_b + beta3 rho2_beta from the L- system."""
    Q, S10, S01, T20, T11 = gs.Q, fields["S10"], fields["S01"], fields["T20"], fields["T11"]
    grid = gs.grid
    Lp0 = LinearizedOperator(gs, "plus", 0)
    Lm0 = LinearizedOperator(gs, "minus", 0)
    Lm1 = LinearizedOperator(gs, "minus", 1)
    r1 = solve_constrained(Lp0, S10)
    rho1 = r1.solution.real
    q_m13 = Q.values.real ** (-1.0 / 3.0)
    rhs_b = SectorField(grid, 0, 2.0 / 3.0 * q_m13 * S10.values * rho1.values) \
        + sp.lambda_op(rho1) - 2.0 * T20
    rhs_beta = SectorField(grid, 1, 2.0 / 3.0 * q_m13 * S01.values * rho1.values
                           - sp.radial_derivative(rho1).values - T11.values)
    proj_b = abs(sp.inner_product(Q, rhs_b)) / (Q.norm() * rhs_b.norm())
    if proj_b > 1e-6:
        raise ExpansionInconsistencyError(
            f"rho2 right-hand side (b part) not orthogonal to Q: {proj_b:.3e}",
            order="rho2_b", inner_product=proj_b)
    mu, wmu = angular_nodes(24)
    # sector-1 data against radial Q: the mu-integral of mu vanishes
    cross = abs(np.sum(wmu * mu)) * abs(np.sum(grid.weights(0) * Q.values * rhs_beta.values))
    proj_beta = cross / (Q.norm() * rhs_beta.norm())
    r2b = solve_constrained(Lm0, rhs_b, solvability_tol=1e-6)
    r2beta = solve_constrained(Lm1, rhs_beta)
    info = {
        "rho1_residual": r1.residual,
        "rho2_b_projection": proj_b,
        "rho2_beta_projection": proj_beta,
        "rho2_b_residual": r2b.residual,
        "rho2_beta_residual": r2beta.residual,
    }
    return rho1, r2b.solution.real, r2beta.solution.real, info


def build_profile_set(gs: GroundState, mu_count: int = 24, radius: float = 0.05,
                      points: int = 16) -> ProfileSet:
    first, e1, p1, info1 = build_first_order(gs)
    eq, info_hi = build_higher_orders(gs, first, mu_count, radius, points)
    fields = {k: v for k, v in eq.fields.items()}
    rho1, rho2_b, rho2_beta, info_rho = build_rho(gs, fields)
    diag = {"first_order": info1, "higher_orders": info_hi, "rho": info_rho,
            "identity_S10S10_plus_2T20Q": mass_identity_defect(fields)}
    ps = ProfileSet(gs, fields, e1, p1, rho1, rho2_b, rho2_beta, diag, mu_count)
    ps._equation = eq
    return ps


def mass_identity_defect(fields: dict) -> float:
    """((S10,S10) + 2(T20,Q)) / (S10,S10); zero when the b^2 mass term vanishes."""
    ss = sp.inner_product(fields["S10"], fields["S10"]).real
    tq = sp.inner_product(fields["T20"], fields["Q"]).real
    return (ss + 2 * tq) / ss


def _equation(ps: ProfileSet) -> ProfileEquation:
    eq = getattr(ps, "_equation", None)
    if eq is None:
        eq = ProfileEquation(ps.gs, ps.fields, ps.mu_count)
        ps._equation = eq
    return eq


# -- evaluation at given parameters ----------------------------------------------

@dataclass(frozen=True)
class AssembledProfile:
    ell0: SectorField
    ell1: SectorField
    d_b: tuple
    d_beta: tuple

    def angular(self, mu_count: int = 24) -> AngularField:
        return AngularField.from_sectors(self.ell0.grid, self.ell0.values, self.ell1.values, mu_count)


def assemble_Q_P(params: ModParams, ps: ProfileSet) -> AssembledProfile:
    eq = _equation(ps)
    parts = eq.assemble(params.b, params.beta3)
    g = ps.grid

    def pair(key):
        return (SectorField(g, 0, parts[key][0]), SectorField(g, 1, parts[key][1]))

    v0, v1 = pair("value")
    return AssembledProfile(v0, v1, pair("d_b"), pair("d_beta"))


def residual_Phi(params: ModParams, ps: ProfileSet) -> dict:
    """Phi_P on the (r, mu) grid with its L2 norm and H^m norms of the ell = 0, 1 parts."""
    eq = _equation(ps)
    F = eq.evaluate(params.b, params.beta3, holomorphic=False)
    phi = AngularField(ps.grid, -F, ps.mu_count)
    out = {"field": phi, "l2": phi.l2_norm()}
    for m in (1, 2):
        total = 0.0
        for ell in (0, 1):
            comp = SectorField(ps.grid, ell, phi.project(ell))
            total += sp.apply_multiplier(comp, (1.0 + ps.grid.rho) ** m).norm() ** 2
        out[f"h{m}_sectors"] = float(np.sqrt(total))
    return out


def mass(params: ModParams, ps: ProfileSet) -> float:
    a = assemble_Q_P(params, ps)
    return a.ell0.norm() ** 2 + a.ell1.norm() ** 2


def energy(params: ModParams, ps: ProfileSet) -> float:
    """E = (1/2)(u, D u) - (3/8) int |u|^{8/3}."""
    a = assemble_Q_P(params, ps)
    kin = sp.inner_product(a.ell0, sp.apply_d(a.ell0)).real
    if np.any(a.ell1.values):
        kin += sp.inner_product(a.ell1, sp.apply_d(a.ell1)).real
    ang = a.angular(ps.mu_count)
    pot = ang.integrate(np.abs(ang.values) ** (8.0 / 3.0)).real
    return 0.5 * kin - 3.0 / 8.0 * pot


def momentum3(params: ModParams, ps: ProfileSet) -> float:
    """P_3 = Im int conj(u) d_3 u."""
    a = assemble_Q_P(params, ps)
    ang = a.angular(ps.mu_count)
    d3 = _x3_derivative(a.ell0, ang.mu) + _x3_derivative(a.ell1, ang.mu)
    return ang.integrate(np.conj(ang.values) * d3).imag


def _slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def energy_momentum_expansion(ps: ProfileSet, b_values=(0.02, 0.04, 0.06, 0.08, 0.1),
                              beta_values=(0.005, 0.01, 0.02, 0.04)) -> dict:
    """Fit E(Q_P) = c0 + e b^2 + c b^4 and P_3(Q_P) = p beta3 + O(beta3^3)."""
    b = np.asarray(b_values, float)
    E = np.array([energy(ModParams(x, 0.0), ps) for x in b])
    A = np.column_stack([np.ones_like(b), b**2, b**4])
    e_fit = np.linalg.lstsq(A, E, rcond=None)[0]
    be = np.asarray(beta_values, float)
    P = np.array([momentum3(ModParams(0.0, x), ps) for x in be])
    Ab = np.column_stack([be, be**3])
    p_fit = np.linalg.lstsq(Ab, P, rcond=None)[0]
    return {
        "b": b.tolist(), "energy": E.tolist(), "e1_fit": float(e_fit[1]),
        "energy_over_b2": (E / b**2).tolist(),
        "beta3": be.tolist(), "momentum3": P.tolist(), "p1_fit": float(p_fit[0]),
        "momentum_over_beta": (P / be).tolist(),
        "e1": ps.e1, "p1": ps.p1,
        "energy_at_zero": energy(ModParams(), ps),
    }


def scaling_report(ps: ProfileSet, b_values=(0.2, 0.1, 0.05, 0.025),
                   beta_values=(0.2, 0.1, 0.05), mass_b=(0.02, 0.04, 0.08, 0.12, 0.2)) -> dict:
    phi_b = [residual_Phi(ModParams(x, 0.0), ps)["l2"] for x in b_values]
    phi_beta = [residual_Phi(ModParams(0.0, x), ps)["l2"] for x in beta_values]
    m0 = ps.gs.mass
    dm = [abs(mass(ModParams(x, 0.0), ps) - m0) for x in mass_b]
    return {
        "phi_b": {"b": list(b_values), "l2": phi_b, "slope": _slope(b_values, phi_b)},
        "phi_beta": {"beta3": list(beta_values), "l2": phi_beta,
                     "slope": _slope(beta_values, phi_beta)},
        "mass_deviation": {"b": list(mass_b), "delta": dm, "slope": _slope(mass_b, dm)},
    }


def tail_slopes(ps: ProfileSet, r_lo: float = 50.0, r_hi: float = 150.0) -> dict:
    r = ps.grid.r
    sel = (r >= r_lo) & (r <= r_hi)
    out = {}
    for name, f in ps.fields.items():
        v = np.abs(f.values[sel])
        out[name] = _slope(r[sel], v) if np.all(v > 0) else float("nan")
    return out
