"""Ground state of D Q + Q = Q^{5/3} by Petviashvili iteration, plus its certificates."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import spectral as sp
from .errors import DomainError, IterationDivergedError, SpuriousSolutionError
from .spectral import RadialGrid, SectorField

PETVIASHVILI_EXPONENT = 2.5  # p/(p-1) for p = 5/3


def nonlinearity(u: np.ndarray) -> np.ndarray:
    """|u|^{2/3} u, pointwise."""
    return np.abs(u) ** (2.0 / 3.0) * u


def two_thirds_filter(grid: RadialGrid) -> np.ndarray:
    k = np.arange(1, grid.n + 1)
    return (k <= (2 * grid.n) // 3).astype(float)


def equation_residual(Q: SectorField) -> float:
    """||D Q + Q - |Q|^{2/3} Q|| / ||Q||."""
    res = sp.apply_d(Q) + Q - Q.with_values(nonlinearity(Q.values))
    return res.norm() / Q.norm()


@dataclass(frozen=True)
class GroundState:
    Q: SectorField
    residual_norm: float
    mass: float
    kinetic: float
    potential: float
    iterations: int = 0
    history: tuple = dc_field(default=(), repr=False)

    @property
    def grid(self) -> RadialGrid:
        return self.Q.grid

    def sidecar(self) -> dict:
        return {
            "residual": self.residual_norm,
            "mass": self.mass,
            "kinetic": self.kinetic,
            "potential": self.potential,
            "iterations": self.iterations,
            "grid": {"n": self.grid.n, "r_max": self.grid.r_max},
        }


def potential_integral(u: SectorField) -> float:
    """int |u|^{8/3} dx."""
    return float(np.sum(u.grid.weights(u.sector) * np.abs(u.values) ** (8.0 / 3.0)))


def from_profile(Q: SectorField, iterations: int = 0, history=()) -> GroundState:
    Qr = Q.real
    return GroundState(
        Q=Qr,
        residual_norm=equation_residual(Qr),
        mass=Qr.norm() ** 2,
        kinetic=sp.half_norm_sq(Qr),
        potential=potential_integral(Qr),
        iterations=iterations,
        history=tuple(history),
    )


def solve_ground_state(grid: RadialGrid, tol: float = 1e-10, max_iter: int = 2000,
                       guess: SectorField | None = None,
                       exponent: float = PETVIASHVILI_EXPONENT,
                       use_filter: bool = True,
                       filter_until: float = 1e-6) -> GroundState:
    """Petviashvili iteration Q <- m^exponent (D+1)^{-1} |Q|^{2/3} Q.

    The stabiliser is m = ((D+1)Q, Q) / (|Q|^{2/3}Q, Q); the loop stops once
    the equation residual drops below ``tol``.  The 2/3-rule filter damps
    high-mode noise only until the residual falls below ``filter_until`` or
    stops improving; after that it stays off for good.  The
    spectrum of Q^{5/3} decays merely exponentially, so a permanent cutoff
    would floor the residual far above 1e-10.
    """
    if not tol > 0:
        raise DomainError(f"tolerance must be positive, got {tol}")
    if guess is None:
        q = np.exp(-grid.r**2 / 4)
    else:
        if guess.grid != grid or guess.sector != 0:
            raise DomainError("guess must be a sector-0 field on the solve grid")
        q = guess.values.real.copy()
    resolvent = 1.0 / (grid.rho + 1.0)
    filtered = resolvent * two_thirds_filter(grid)
    res = equation_residual(SectorField(grid, 0, q)) if np.any(q) else np.inf
    d_plus_one = grid.rho + 1.0
    w = grid.weights(0)
    history = []
    for it in range(1, max_iter + 1):
        Qf = SectorField(grid, 0, q)
        nl = nonlinearity(q)
        lhs = sp.apply_multiplier(Qf, d_plus_one).values.real
        denom = np.sum(w * nl * q)
        if not np.isfinite(denom) or denom <= 0:
            raise IterationDivergedError("stabiliser denominator lost positivity", history)
        m = np.sum(w * lhs * q) / denom
        if use_filter and (res <= filter_until or
                           (len(history) > 1 and res > 0.99 * history[-2])):
            use_filter = False
        mult = filtered if use_filter else resolvent
        q = m**exponent * sp.apply_multiplier(Qf.with_values(nl), mult).values.real
        res = equation_residual(SectorField(grid, 0, q)) if np.any(q) else np.inf
        history.append(res)
        if not np.isfinite(res) or not np.any(q):
            raise IterationDivergedError("iterate collapsed or blew up", history)
        if res <= tol:
            break
    else:
        raise IterationDivergedError(
            f"no convergence to {tol:g} in {max_iter} iterations (last {history[-1]:.3g})", history)
    if np.any(q <= 0):
        bad = int(np.argmax(q <= 0))
        raise SpuriousSolutionError(f"converged profile is non-positive at r = {grid.r[bad]:.4g}")
    return from_profile(SectorField(grid, 0, q), it, history)


def stabiliser(Q: SectorField) -> float:
    """Petviashvili factor m for a given iterate (1 at the exact ground state)."""
    q = Q.values.real
    lhs = sp.apply_multiplier(Q.real, Q.grid.rho + 1.0).values.real
    w = Q.grid.weights(0)
    return float(np.sum(w * lhs * q) / np.sum(w * nonlinearity(q) * q))


def pohozaev_report(gs: GroundState) -> dict:
    A, B, C = gs.kinetic, gs.mass, gs.potential
    energy = A / 2 - 3 * C / 8
    return {
        "kinetic": A,
        "mass": B,
        "potential": C,
        "kinetic_over_mass": A / B,
        "potential_over_mass": C / B,
        "energy": energy,
        "energy_over_mass": energy / B,
    }


def gn_functional(u: SectorField) -> float:
    """W(u) = ||D^{1/2}u||^2 ||u||^{2/3} / int |u|^{8/3}."""
    pot = potential_integral(u)
    if pot == 0:
        raise DomainError("Gagliardo-Nirenberg quotient undefined for the zero field")
    return sp.half_norm_sq(u) * u.norm() ** (2.0 / 3.0) / pot


def gn_optimal_constant(gs: GroundState) -> float:
    """C_opt = (4/3) ||Q||^{-2/3}, so that int|u|^{8/3} <= C_opt ||D^{1/2}u||^2 ||u||^{2/3}."""
    return 4.0 / 3.0 * gs.mass ** (-1.0 / 3.0)


def tail_slope(f: SectorField, r_lo: float = 50.0, r_hi: float = 150.0) -> float:
    """Least-squares log-log slope of |f| over [r_lo, r_hi]."""
    r = f.grid.r
    sel = (r >= r_lo) & (r <= r_hi)
    vals = np.abs(f.values[sel])
    if sel.sum() < 2 or np.any(vals == 0):
        raise DomainError("tail window empty or field vanishes there")
    return float(np.polyfit(np.log(r[sel]), np.log(vals), 1)[0])


def is_monotone_decreasing(f: SectorField) -> bool:
    return bool(np.all(np.diff(f.values.real) < 0))
