"""Single-agent solution and population flow when the viral state is observed.

With full information the infected states have stationary closed-form values,
so the only dynamic object is the susceptible value v_t(s).  Its HJB equation
is a scalar ODE with a bang-bang activity choice; for a constant infected
activity level the optimal behaviour collapses to a threshold rule in
``beta_crit``.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping

import numpy as np

from epimfg.params import EpiState, ModelParams, phi_bar_a

# Backward integration stops once the value is numerically stationary.
STATIONARY_EPS = 1e-10
STATIONARY_RUN = 100


class Regime(Enum):
    ACTIVE = "active"
    ISOLATE = "isolate"


@dataclass(frozen=True)
class StationaryDecision:
    """Stationary susceptible solution for a constant infected activity level."""

    beta_bar: float
    beta_crit: float
    regime: Regime
    v_s: float
    u_opt: int


@dataclass(frozen=True)
class SusceptibleValuePath:
    """Backward-solved v_t(s) with its bang-bang control on a uniform grid."""

    t: np.ndarray
    v: np.ndarray
    u: np.ndarray
    stationary_from: int | None = None  # grid index below which v was frozen

    def value_fn(self) -> Callable[[float], float]:
        return lambda t: float(np.interp(t, self.t, self.v))

    def control_fn(self) -> Callable[[float], float]:
        # piecewise-constant (left-continuous) lookup of the bang-bang control
        def u_of(t: float) -> float:
            k = int(np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, len(self.t) - 1))
            return float(self.u[k])
        return u_of


def beta_crit(params: ModelParams) -> float:
    """Infected-activity level above which a susceptible agent isolates."""
    pa = phi_bar_a(params)
    if params.lambda_sa <= 0 or pa <= 0:
        raise ValueError("beta_crit needs lambda_sa > 0 and phi_bar_a > 0")
    return params.alpha / (params.lambda_sa * pa) * (1.0 + params.eta / params.gamma)


def activity_margin(beta_bar: float, v_s: float, params: ModelParams) -> float:
    """Coefficient multiplying u in the susceptible HJB; active iff negative."""
    return params.lambda_sa * beta_bar * (phi_bar_a(params) - v_s) - params.alpha


def stationary_decision(beta_bar: float, params: ModelParams) -> StationaryDecision:
    """Threshold rule for a susceptible agent facing constant beta_bar.

    Below the critical level the agent stays active and its value solves the
    u = 1 branch; at or above it the agent isolates (ties go to isolation).
    """
    if not 0.0 <= beta_bar <= 1.0:
        raise ValueError("beta_bar must lie in [0, 1]")
    pa = phi_bar_a(params)
    crit = beta_crit(params)
    if beta_bar < crit:
        rate = params.lambda_sa * beta_bar + params.eta
        v = (rate * pa - params.alpha) / (rate + params.gamma)
        return StationaryDecision(beta_bar, crit, Regime.ACTIVE, v, 1)
    v = params.eta / (params.gamma + params.eta) * pa
    return StationaryDecision(beta_bar, crit, Regime.ISOLATE, v, 0)


def _beta_on_grid(beta, t: np.ndarray) -> np.ndarray:
    if callable(beta):
        vals = np.asarray([beta(tk) for tk in t], dtype=float)
    else:
        arr = np.asarray(beta, dtype=float)
        if arr.ndim == 0:
            vals = np.full_like(t, float(arr))
        elif arr.shape == t.shape:
            vals = arr.copy()
        else:
            raise ValueError(f"beta samples have shape {arr.shape}, expected {t.shape}")
    if not np.all(np.isfinite(vals)):
        raise ValueError("beta path contains non-finite samples")
    return vals


def solve_susceptible_hjb(beta, horizon: float, dt: float, params: ModelParams,
                          v_terminal: float | None = None) -> SusceptibleValuePath:
    """Integrate the susceptible HJB ODE backward from the horizon.

    ``beta`` may be a scalar, an array on the solver grid, or a callable of
    time.  The terminal value defaults to the stationary solution at the
    terminal beta, which minimizes truncation bias for long horizons.
    Classical RK4 in reversed time; with a constant beta the integration
    stops early once stationary.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    n = int(round(horizon / dt))
    t = np.linspace(0.0, n * dt, n + 1)
    b = _beta_on_grid(beta, t)
    pa = phi_bar_a(params)
    gam, eta, lsa, alp = params.gamma, params.eta, params.lambda_sa, params.alpha

    if v_terminal is None:
        v_terminal = stationary_decision(float(b[-1]), params).v_s

    def rhs(bval: float, v: float) -> float:
        # dv/dxi in reversed time xi = horizon - t
        m = lsa * bval * (pa - v) - alp
        return -(gam + eta) * v + eta * pa + min(m, 0.0)

    v = np.empty(n + 1)
    v[n] = v_terminal
    beta_const = bool(np.ptp(b) == 0.0)
    streak = 0
    stationary_from = None
    for k in range(n, 0, -1):
        bk, bk1 = b[k], b[k - 1]
        bmid = 0.5 * (bk + bk1)
        y = v[k]
        k1 = rhs(bk, y)
        k2 = rhs(bmid, y + 0.5 * dt * k1)
        k3 = rhs(bmid, y + 0.5 * dt * k2)
        k4 = rhs(bk1, y + dt * k3)
        v[k - 1] = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if beta_const:
            streak = streak + 1 if abs(v[k - 1] - v[k]) < STATIONARY_EPS else 0
            if streak >= STATIONARY_RUN:
                v[: k - 1] = v[k - 1]
                stationary_from = k - 1
                break
    u = (lsa * b * (pa - v) - alp < 0.0).astype(np.int8)
    return SusceptibleValuePath(t, v, u, stationary_from)


# -- population flow ---------------------------------------------------------

# State order used in the per-attribute probability vectors.
STATE_ORDER = (EpiState.S, EpiState.A, EpiState.I, EpiState.R, EpiState.D)

MASS_TOL = 1e-8

# A fully-observed policy maps time to activity levels (u_s, u_a, u_i).
PolicyFO = Callable[[float], tuple[float, float, float]]


def constant_policy(u_s: float, u_a: float = 0.0, u_i: float = 0.0) -> PolicyFO:
    return lambda t: (u_s, u_a, u_i)


@dataclass(frozen=True)
class PopulationState:
    """Per-attribute state fractions over time plus the realized activity level."""

    t: np.ndarray
    fractions: Mapping[str, np.ndarray]  # theta id -> (n_steps + 1, 5)
    beta: np.ndarray

    def mixed(self, params: ModelParams) -> np.ndarray:
        out = np.zeros_like(next(iter(self.fractions.values())))
        for attr in params.attributes:
            out += attr.prob * self.fractions[attr.id]
        return out


def propagate_population(policies: Mapping[str, PolicyFO], rho_0, dt: float,
                         horizon: float, params: ModelParams) -> PopulationState:
    """Push the per-attribute state fractions forward under given policies.

    At every stage the infected activity level is recomputed from the current
    fractions, beta = sum_theta p(theta) (rho_a u_a + rho_i u_i), so one call
    realizes a full population response.  RK4 in time; aborts if any fraction
    vector leaves the probability simplex beyond tolerance.
    """
    attrs = params.attributes
    rates = {a.id: params.for_attribute(a) for a in attrs}
    n = int(round(horizon / dt))
    t = np.linspace(0.0, n * dt, n + 1)

    rho0 = np.asarray(rho_0, dtype=float)
    if rho0.ndim == 1:
        rho0 = np.tile(rho0, (len(attrs), 1))
    if rho0.shape != (len(attrs), 5):
        raise ValueError(f"rho_0 must have shape ({len(attrs)}, 5) or (5,)")

    def beta_of(y: np.ndarray, tk: float) -> float:
        total = 0.0
        for m, a in enumerate(attrs):
            _, u_a, u_i = policies[a.id](tk)
            total += a.prob * (y[m, 1] * u_a + y[m, 2] * u_i)
        return float(np.clip(total, 0.0, 1.0))

    def rhs(y: np.ndarray, tk: float) -> np.ndarray:
        b = beta_of(y, tk)
        out = np.empty_like(y)
        for m, a in enumerate(attrs):
            p = rates[a.id]
            u_s, _, _ = policies[a.id](tk)
            rs, ra, ri, _, _ = y[m]
            infect = (p.lambda_sa * b * u_s + p.eta) * rs
            out[m, 0] = -infect
            out[m, 1] = infect - (p.lambda_ai + p.lambda_ar) * ra
            out[m, 2] = p.lambda_ai * ra - (p.lambda_ir + p.lambda_id) * ri
            out[m, 3] = p.lambda_ar * ra + p.lambda_ir * ri
            out[m, 4] = p.lambda_id * ri
        return out

    traj = np.empty((n + 1, len(attrs), 5))
    beta_out = np.empty(n + 1)
    y = rho0.copy()
    for k in range(n + 1):
        if np.any(y < -MASS_TOL) or np.any(np.abs(y.sum(axis=1) - 1.0) > MASS_TOL):
            raise RuntimeError(f"state fractions left the simplex at t={t[k]:.6g}")
        traj[k] = y
        beta_out[k] = beta_of(y, t[k])
        if k == n:
            break
        tk = t[k]
        k1 = rhs(y, tk)
        k2 = rhs(y + 0.5 * dt * k1, tk + 0.5 * dt)
        k3 = rhs(y + 0.5 * dt * k2, tk + 0.5 * dt)
        k4 = rhs(y + dt * k3, tk + dt)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        np.clip(y, 0.0, None, out=y)
    fractions = {a.id: traj[:, m, :] for m, a in enumerate(attrs)}
    return PopulationState(t, fractions, beta_out)


def fully_observed_mfe(params: ModelParams, initial_beta=0.5, **kwargs):
    """Fixed-point iteration specialized to full observation (see ``mfe``)."""
    from epimfg import mfe

    return mfe.find_mfe(initial_beta, params, mode="fully-observed", **kwargs)
