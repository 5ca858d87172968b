"""Leading-order modulation system in the rescaled clock s, with closed forms and fits.

State vector layout: (b, beta[3], lam, alpha[3], gamma, t).  Along the leading
system b_s = -b^2/2, beta_s = -b beta, lam_s = -b lam, alpha_s = lam beta,
gamma_s = 1 and t_s = lam.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, FitError

PRINTED_SPEED_EXPONENT = -0.25  # stated blowup speed, flagged as not sharp


@dataclass(frozen=True)
class ModulationState:
    b: float
    beta: tuple = (0.0, 0.0, 0.0)
    lam: float = 1.0
    alpha: tuple = (0.0, 0.0, 0.0)
    gamma: float = 0.0
    t: float = 0.0
    s: float = 0.0

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError(f"scale must be positive, got {self.lam}")
        object.__setattr__(self, "beta", tuple(float(x) for x in self.beta))
        object.__setattr__(self, "alpha", tuple(float(x) for x in self.alpha))

    def to_vector(self) -> np.ndarray:
        return np.array([self.b, *self.beta, self.lam, *self.alpha, self.gamma, self.t])

    @classmethod
    def from_vector(cls, y, s: float) -> "ModulationState":
        return cls(b=y[0], beta=tuple(y[1:4]), lam=y[4], alpha=tuple(y[5:8]),
                   gamma=y[8], t=y[9], s=s)


def _rhs(y: np.ndarray) -> np.ndarray:
    b, beta, lam = y[0], y[1:4], y[4]
    return np.concatenate([[-0.5 * b * b], -b * beta, [-b * lam], lam * beta, [1.0], [lam]])


def rhs_leading(state: ModulationState) -> dict:
    """s-derivatives of (b, beta, lam, alpha, gamma) along the leading system."""
    if not state.lam > 0:
        raise DomainError("scale must be positive")
    d = _rhs(state.to_vector())
    return {"b": d[0], "beta": tuple(d[1:4]), "lam": d[4], "alpha": tuple(d[5:8]),
            "gamma": d[8], "t": d[9]}


@dataclass(frozen=True)
class Trajectory:
    s: np.ndarray
    y: np.ndarray  # shape (len(s), 10)

    @property
    def b(self):
        return self.y[:, 0]

    @property
    def beta(self):
        return self.y[:, 1:4]

    @property
    def lam(self):
        return self.y[:, 4]

    @property
    def alpha(self):
        return self.y[:, 5:8]

    @property
    def gamma(self):
        return self.y[:, 8]

    @property
    def t(self):
        return self.y[:, 9]

    def state(self, i: int) -> ModulationState:
        return ModulationState.from_vector(self.y[i], self.s[i])

    def __len__(self):
        return len(self.s)


def rk4_step(y, ds):
    k1 = _rhs(y)
    k2 = _rhs(y + 0.5 * ds * k1)
    k3 = _rhs(y + 0.5 * ds * k2)
    k4 = _rhs(y + ds * k3)
    return y + ds / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(state0: ModulationState, s_span: float, ds: float,
              lam_min: float | None = None) -> Trajectory:
    """Classical RK4 in s over [s0, s0 + s_span] (negative span integrates backwards)."""
    if ds <= 0:
        raise ConfigurationError("step ds must be positive")
    if abs(state0.b) * ds > 0.1:
        raise ConfigurationError(f"step too large: |b| ds = {abs(state0.b) * ds:.3g} > 0.1")
    steps = int(round(abs(s_span) / ds))
    if steps == 0 or not np.isclose(steps * ds, abs(s_span), rtol=1e-12, atol=1e-14):
        raise ConfigurationError("s_span must be a positive multiple of ds")
    h = np.sign(s_span) * ds
    ys = [state0.to_vector()]
    ss = [state0.s]
    for k in range(steps):
        y = rk4_step(ys[-1], h)
        if abs(y[0]) * ds > 0.1:
            raise ConfigurationError("step-size bound |b| ds <= 0.1 violated during integration")
        if not y[4] > 0:
            raise DomainError("scale crossed zero")
        ys.append(y)
        ss.append(state0.s + (k + 1) * h)
        if lam_min is not None and y[4] < lam_min:
            break
    return Trajectory(np.array(ss), np.array(ys))


def closed_form(state0: ModulationState, s) -> dict:
    """Exact leading-order solution as a function of s - s0."""
    s = np.asarray(s, dtype=float) - state0.s
    b0, lam0 = state0.b, state0.lam
    grow = 1.0 + 0.5 * b0 * s
    b = b0 / grow
    lam = lam0 / grow**2
    beta = np.multiply.outer(1.0 / grow**2, np.array(state0.beta))
    if b0 == 0:
        t = state0.t + lam0 * s
        alpha = np.array(state0.alpha) + np.multiply.outer(lam0 * s, np.array(state0.beta))
    else:
        # int lam ds = (2 lam0 / b0)(1 - 1/grow); int lam beta ds uses grow^-4
        t = state0.t + 2 * lam0 / b0 * (1 - 1 / grow)
        integral = 2 * lam0 / (3 * b0) * (1 - grow**-3)
        alpha = np.array(state0.alpha) + np.multiply.outer(integral, np.array(state0.beta))
    return {"b": b, "lam": lam, "beta": beta, "alpha": alpha,
            "gamma": state0.gamma + s, "t": t}


def remaining_time(b: float, lam: float) -> float:
    """T - t = int_s^inf lam ds' = 2 lam / b along the leading system."""
    if not b > 0:
        raise DomainError("no finite-time blowup for b <= 0")
    return 2.0 * lam / b


@dataclass(frozen=True)
class AsymptoticTargets:
    blowup_time: float
    lam_star: float
    exponent: float
    gamma_coefficient: float
    speed_exponent: float
    printed_speed_exponent: float = PRINTED_SPEED_EXPONENT
    inv_A0: float | None = None
    ratio_deviation: float | None = None
    note: str = "printed blowup speed exponent -1/4 is not sharp; measured value reported"

    def as_dict(self):
        return dict(self.__dict__)


def amplitude_constant(e1: float, energy0: float) -> float:
    """A0 = sqrt(e1 / E0)."""
    if not energy0 > 0:
        raise DomainError("A0 needs positive energy")
    return float(np.sqrt(e1 / energy0))


def momentum_constant(p0: float, p1: float) -> float:
    """B0 = P0 / p1."""
    return p0 / p1


def fit_blowup_laws(traj: Trajectory, A0: float | None = None, tail: int | None = None) -> AsymptoticTargets:
    """Fit lam = lam* (T - t)^p, gamma = c/(T - t) + const and the H^{1/2} proxy exponent."""
    lam, t, b, gamma = traj.lam, traj.t, traj.b, traj.gamma
    if np.any(np.diff(lam) >= 0):
        raise FitError("scale is not strictly decreasing along the trajectory")
    T = t[-1] + remaining_time(b[-1], lam[-1])
    sel = slice(-tail, None) if tail else slice(None)
    tau = T - t[sel]
    if np.any(tau <= 0):
        raise FitError("extrapolated blowup time precedes trajectory samples")
    p, logc = np.polyfit(np.log(tau), np.log(lam[sel]), 1)
    gfit = np.polyfit(1.0 / tau, gamma[sel], 1)
    speed = np.polyfit(np.log(tau), np.log(lam[sel] ** -0.5), 1)[0]
    inv_a0 = dev = None
    if A0 is not None:
        inv_a0 = 1.0 / A0
        dev = float(np.max(np.abs(b / np.sqrt(lam) - inv_a0)))
    return AsymptoticTargets(float(T), float(np.exp(logc)), float(p), float(gfit[0]),
                             float(speed), inv_A0=inv_a0, ratio_deviation=dev)


def mod_vector(state: ModulationState, derivs: dict) -> np.ndarray:
    """(b_s + b^2/2, gamma_s - 1, lam_s/lam + b, alpha_s/lam - beta, beta_s + b beta)."""
    b, lam = state.b, state.lam
    beta = np.array(state.beta)
    return np.concatenate([
        [derivs["b"] + 0.5 * b * b],
        [derivs["gamma"] - 1.0],
        [derivs["lam"] / lam + b],
        np.array(derivs["alpha"]) / lam - beta,
        np.array(derivs["beta"]) + b * beta,
    ])


def mod_from_series(t, lam, b, gamma, alpha=None, beta=None) -> np.ndarray:
    """Mod(t) rows from lab-time series using centred differences (s-derivative = lam d/dt)."""
    t, lam, b, gamma = (np.asarray(x, float) for x in (t, lam, b, gamma))
    n = len(t)
    alpha = np.zeros((n, 3)) if alpha is None else np.asarray(alpha, float)
    beta = np.zeros((n, 3)) if beta is None else np.asarray(beta, float)
    ddt = lambda x: np.gradient(x, t, axis=0, edge_order=2)  # noqa: E731
    rows = []
    db, dl, dg, da, dbe = ddt(b), ddt(lam), ddt(gamma), ddt(alpha), ddt(beta)
    for i in range(n):
        st = ModulationState(b[i], tuple(beta[i]), lam[i], tuple(alpha[i]), gamma[i], t[i])
        rows.append(mod_vector(st, {"b": lam[i] * db[i], "gamma": lam[i] * dg[i],
                                    "lam": lam[i] * dl[i], "alpha": lam[i] * da[i],
                                    "beta": lam[i] * dbe[i]}))
    return np.array(rows)


CSV_COLUMNS = ("t", "s", "b", "beta3", "lambda", "alpha3", "gamma",
               "b_over_sqrt_lambda", "beta_over_lambda")


def write_trajectory_csv(path, traj: Trajectory) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for i in range(len(traj)):
            b, lam = traj.b[i], traj.lam[i]
            row = (traj.t[i], traj.s[i], b, traj.beta[i, 2], lam, traj.alpha[i, 2], traj.gamma[i],
                   b / np.sqrt(lam), traj.beta[i, 2] / lam)
            w.writerow([f"{x:.17g}" for x in row])
