"""Radial time integration of i u_t = D u - |u|^{2/3} u and modulation extraction.

Strang splitting with two exact flows: the pointwise phase rotation
u -> u exp(i tau |u|^{2/3}) and the half-wave propagator exp(-i tau D).
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import spectral as sp
from .errors import (BasinError, ConditioningError, ConfigurationError, DomainError,
                     FormatError, HalfwaveError)
from .ground_state import potential_integral
from .modulation import ModulationState, mod_from_series
from .profile import ProfileSet
from .snapshot import write_field, read_field, write_json
from .spectral import SectorField


# -- one-step maps --------------------------------------------------------

def nonlinear_flow(u: SectorField, tau: float) -> SectorField:
    return u.with_values(u.values * np.exp(1j * tau * np.abs(u.values) ** (2.0 / 3.0)))


def linear_flow(u: SectorField, tau: float) -> SectorField:
    return sp.apply_multiplier(u, np.exp(-1j * tau * u.grid.rho))


def step_strang(u: SectorField, dt: float) -> SectorField:
    if u.sector != 0:
        raise ConfigurationError("evolution runs on the radial sector")
    return nonlinear_flow(linear_flow(nonlinear_flow(u, 0.5 * dt), dt), 0.5 * dt)


def propagate(u: SectorField, dt: float, steps: int) -> SectorField:
    for _ in range(steps):
        u = step_strang(u, dt)
    return u


def conserved(u: SectorField) -> dict:
    """Mass, energy and momentum; momentum vanishes identically on radial data."""
    mass = u.norm() ** 2
    energy = 0.5 * sp.half_norm_sq(u) - 3.0 / 8.0 * potential_integral(u)
    return {"M": mass, "E": energy, "P": (0.0, 0.0, 0.0)}


def richardson_ratio(u0: SectorField, dt: float, steps: int) -> float:
    """(u_dt - u_dt/2) / (u_dt/2 - u_dt/4) in L2; about 4 for a second-order scheme."""
    a = propagate(u0, dt, steps)
    b = propagate(u0, dt / 2, 2 * steps)
    c = propagate(u0, dt / 4, 4 * steps)
    return (a - b).norm() / (b - c).norm()


# -- radial profile family -----------------------------------------------------

RADIAL_TERMS = (("Q", 0, 1.0), ("S10", 1, 1j), ("T20", 2, 1.0), ("S30", 3, 1j), ("T40", 4, 1.0))


def radial_profile(ps: ProfileSet, b: float, derivative: int = 0) -> SectorField:
    """d^k/db^k of the beta = 0 profile Q + i b S10 + b^2 T20 + i b^3 S30 + b^4 T40."""
    vals = np.zeros(ps.grid.n, dtype=complex)
    for name, power, phase in RADIAL_TERMS:
        if power < derivative or name not in ps.fields:
            continue
        coef = np.prod(np.arange(power, power - derivative, -1)) if derivative else 1.0
        vals += phase * coef * b ** (power - derivative) * ps.fields[name].values
    return SectorField(ps.grid, 0, vals)


def modulated_data(ps: ProfileSet, b: float, lam: float, gamma: float,
                   grid: sp.RadialGrid | None = None) -> SectorField:
    """lam^{-3/2} Q_P(r / lam) e^{i gamma} sampled on ``grid``."""
    grid = grid or ps.grid
    prof = radial_profile(ps, b)
    vals = lam**-1.5 * sp.evaluate(prof, grid.r / lam) * np.exp(1j * gamma)
    return SectorField(grid, 0, vals)


# -- decomposition ----------------------------------------------------------------

@dataclass
class DecompositionResult:
    state: ModulationState
    epsilon: SectorField
    orthogonality: list
    eps_l2: float
    eps_h_half: float
    iterations: int

    @property
    def eps_real(self):
        return self.epsilon.real

    @property
    def eps_imag(self):
        return self.epsilon.imag


def _pull_back(u: SectorField, lam: float, gamma: float, grid) -> SectorField:
    """v(y) = lam^{3/2} u(lam y) e^{-i gamma} on the profile grid."""
    return SectorField(grid, 0, lam**1.5 * sp.evaluate(u, lam * grid.r) * np.exp(-1j * gamma))


def _imag_pair(f: SectorField, g: SectorField) -> float:
    return sp.inner_product(f, g).imag


def orthogonality_residuals(eps: SectorField, ps: ProfileSet, b: float) -> np.ndarray:
    """The three radial conditions: Im(Lambda Q_P, eps), Im(d_b Q_P, eps), Im int rho eps."""
    qp_b = radial_profile(ps, b, 1)
    lq = sp.lambda_op(radial_profile(ps, b))
    rho = ps.rho1 + 1j * b * ps.rho2_b
    return np.array([
        _imag_pair(lq, eps),
        _imag_pair(qp_b, eps),
        _imag_pair(rho.conj(), eps),
    ])


def decompose(u: SectorField, guess: ModulationState, ps: ProfileSet, tol: float = 1e-11,
              max_iter: int = 30, jacobian: str = "analytic") -> DecompositionResult:
    """Newton on (lam, gamma, b) for the radial orthogonality conditions."""
    grid = ps.grid
    x = np.array([guess.lam, guess.gamma, guess.b], dtype=float)
    qn = ps.Q.norm()

    def system(x):
        lam, gam, b = x
        if not lam > 0:
            raise BasinError("scale left the positive axis", x.copy())
        v = _pull_back(u, lam, gam, grid)
        eps = v - radial_profile(ps, b)
        return v, eps, orthogonality_residuals(eps, ps, b)

    for it in range(1, max_iter + 1):
        v, eps, G = system(x)
        scale = max(eps.norm(), 1e-300) * qn
        if np.max(np.abs(G)) <= tol * max(scale, qn * 1e-3) and it > 1:
            break
        if jacobian == "analytic":
            J = _analytic_jacobian(v, eps, ps, x)
        else:
            J = _fd_jacobian(system, x)
        cond = np.linalg.cond(J)
        if not np.isfinite(cond) or cond > 1e12:
            raise ConditioningError(f"decomposition Jacobian is singular (cond {cond:.2e})", x.copy())
        step = np.linalg.solve(J, -G)
        x = x + step
        if not np.all(np.isfinite(x)) or np.max(np.abs(step)) > 1.0:
            raise BasinError("Newton step left the basin", x.copy())
        if np.max(np.abs(step)) < 1e-14:
            v, eps, G = system(x)
            break
    else:
        raise BasinError(f"no convergence in {max_iter} Newton steps", x.copy())
    lam, gam, b = x
    h_half = np.sqrt(eps.norm() ** 2 + sp.half_norm_sq(eps))
    return DecompositionResult(
        ModulationState(b=b, lam=lam, gamma=gam, t=guess.t, s=guess.s), eps,
        [float(g) for g in G], eps.norm(), float(h_half), it)


def _analytic_jacobian(v, eps, ps, x):
    lam, gam, b = x
    dv_dlam = sp.lambda_op(v) / lam
    dv_dgam = -1j * v
    qp_b = radial_profile(ps, b, 1)
    qp_bb = radial_profile(ps, b, 2)
    tests = [sp.lambda_op(radial_profile(ps, b)), qp_b, (ps.rho1 + 1j * b * ps.rho2_b).conj()]
    test_db = [sp.lambda_op(qp_b), qp_bb, (1j * ps.rho2_b).conj()]
    J = np.zeros((3, 3))
    for i, (f, fb) in enumerate(zip(tests, test_db)):
        J[i, 0] = _imag_pair(f, dv_dlam)
        J[i, 1] = _imag_pair(f, dv_dgam)
        J[i, 2] = _imag_pair(f, -qp_b) + _imag_pair(fb, eps)
    return J


def _fd_jacobian(system, x, h=1e-6):
    J = np.zeros((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = h * max(1.0, abs(x[j]))
        J[:, j] = (system(x + e)[2] - system(x - e)[2]) / (2 * e[j])
    return J


# -- driver -------------------------------------------------------------------------

@dataclass
class EvolutionConfig:
    grid_n: int = 4096
    grid_rmax: float = 200.0
    dt: float = 0.01
    t0: float = 0.0
    t_end: float = 10.0
    b0: float = 0.1
    lam0: float = 1.0
    gamma0: float = 0.0
    beta0: float = 0.0
    initial_file: str | None = None
    snapshot_stride: int = 10
    decompose_stride: int = 10
    lam_min: float = 0.5
    rescale: bool = True

    def validate(self):
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if self.dt > 0.1 * self.lam0:
            raise ConfigurationError(f"dt = {self.dt} exceeds the accuracy bound 0.1 lam0")
        if self.t_end <= self.t0:
            raise ConfigurationError("t_end must exceed t0")
        if self.beta0 != 0.0:
            raise DomainError("radial evolution requires beta0 = 0")
        if self.snapshot_stride < 1 or self.decompose_stride < 1:
            raise ConfigurationError("strides must be positive")


SERIES_COLUMNS = ("t", "M", "E", "P3", "lambda", "b", "gamma", "eps_l2", "eps_h_half", "mod_norm")


@dataclass
class EvolutionResult:
    config: EvolutionConfig
    rows: list = dc_field(default_factory=list)
    rescales: list = dc_field(default_factory=list)
    truncated: str | None = None
    final: SectorField | None = None
    snapshots: list = dc_field(default_factory=list)

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)


def initial_field(cfg: EvolutionConfig, ps: ProfileSet, grid) -> SectorField:
    if cfg.initial_file:
        u = read_field(cfg.initial_file)
        if u.grid != grid:
            u = SectorField(grid, 0, sp.evaluate(u, grid.r))
        return u
    return modulated_data(ps, cfg.b0, cfg.lam0, cfg.gamma0, grid)


def _rescale_grid(u: SectorField):
    """Halve r_max at fixed n; returns the new field and its interpolation error."""
    old = u.grid
    new = sp.make_grid(old.n, old.r_max / 2)
    v = SectorField(new, 0, sp.evaluate(u, new.r))
    lost = abs(u.norm() ** 2 - v.norm() ** 2) / u.norm() ** 2
    back = SectorField(old, 0, sp.evaluate(v, np.minimum(old.r, new.r_max * (1 - 1e-15))))
    inside = old.r < new.r_max
    err = np.sqrt(np.sum(old.weights(0)[inside] * np.abs(back.values - u.values)[inside] ** 2)) / u.norm()
    return v, {"r_max": new.r_max, "mass_change": lost, "interpolation_error": float(err)}


def evolve(cfg: EvolutionConfig, ps: ProfileSet, out_dir=None) -> EvolutionResult:
    cfg.validate()
    grid = sp.make_grid(cfg.grid_n, cfg.grid_rmax)
    u = initial_field(cfg, ps, grid)
    result = EvolutionResult(cfg)
    snap_dir = None
    if out_dir is not None:
        out = Path(out_dir)
        snap_dir = out / "snapshots"
        try:
            snap_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise FormatError(f"cannot create {snap_dir}: {exc}") from exc
        write_json(out / "config.json", {"schema": 1, "config": asdict(cfg),
                                         "profile_grid": {"n": ps.grid.n, "r_max": ps.grid.r_max}})
    guess = ModulationState(b=cfg.b0, lam=cfg.lam0, gamma=cfg.gamma0, t=cfg.t0)
    lam_ref = cfg.lam0
    t = cfg.t0
    steps = int(round((cfg.t_end - cfg.t0) / cfg.dt))
    k = 0
    while True:
        if k % cfg.decompose_stride == 0:
            cons = conserved(u)
            try:
                dec = decompose(u, guess, ps)
            except HalfwaveError as exc:
                result.truncated = f"decomposition failed at t = {t:.6g}: {exc}"
                break
            st = dec.state
            guess = ModulationState(b=st.b, lam=st.lam, gamma=st.gamma, t=t)
            result.rows.append({"t": t, "M": cons["M"], "E": cons["E"], "P3": 0.0,
                                "lambda": st.lam, "b": st.b, "gamma": st.gamma,
                                "eps_l2": dec.eps_l2, "eps_h_half": dec.eps_h_half,
                                "mod_norm": float("nan")})
            if st.lam < cfg.lam_min:
                break
            if cfg.rescale and st.lam < 0.5 * lam_ref:
                u, info = _rescale_grid(u)
                info["t"] = t
                result.rescales.append(info)
                lam_ref = st.lam
        if snap_dir is not None and k % cfg.snapshot_stride == 0:
            path = snap_dir / f"{k:06d}.hwbl"
            write_field(path, u)
            result.snapshots.append(str(path))
        if k >= steps:
            break
        u = step_strang(u, cfg.dt)
        k += 1
        t = cfg.t0 + k * cfg.dt
    result.final = u
    _fill_mod(result)
    if out_dir is not None:
        write_series(Path(out_dir) / "series.csv", result)
    return result


def _fill_mod(result: EvolutionResult):
    if len(result.rows) < 3:
        return
    t, lam, b, gam = (result.column(c) for c in ("t", "lambda", "b", "gamma"))
    mods = mod_from_series(t, lam, b, gam)
    for row, m in zip(result.rows, mods):
        row["mod_norm"] = float(np.linalg.norm(m))


def write_series(path, result: EvolutionResult):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(SERIES_COLUMNS)
            for row in result.rows:
                w.writerow([f"{row[c]:.17g}" for c in SERIES_COLUMNS])
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc}") from exc


def summary(result: EvolutionResult) -> dict:
    M = result.column("M")
    out = {"rows": len(result.rows), "truncated": result.truncated, "rescales": result.rescales,
           "mass_drift": float(np.max(np.abs(M - M[0])) / M[0]) if len(M) else None}
    return json.loads(json.dumps(out))
