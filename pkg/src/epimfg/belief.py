"""Pre-symptom belief filter on the (S, A, R) probability simplex.

Before symptom onset the agent's conditional state law has support on
{susceptible, asymptomatic, recovered}; its evolution is a deterministic
nonlinear ODE driven by the agent's own activity and the population infected
activity level.  The filter is only valid up to the symptom-onset time; the
jump itself is sampled in ``agents``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from epimfg.params import ModelParams

log = logging.getLogger(__name__)

DEFAULT_DT = 0.01
_SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class Belief:
    """A point on the 2-simplex; r is stored explicitly."""

    s: float
    a: float
    r: float

    @classmethod
    def from_sa(cls, s: float, a: float) -> "Belief":
        return cls(s, a, 1.0 - s - a)

    def __post_init__(self):
        for name, val in (("s", self.s), ("a", self.a), ("r", self.r)):
            if val < -1e-12:
                raise ValueError(f"belief component {name}={val!r} below 0")
        if abs(self.s + self.a + self.r - 1.0) > 1e-10:
            raise ValueError(f"belief components sum to {self.s + self.a + self.r!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.a, self.r])


@dataclass(frozen=True)
class FilterTrajectory:
    """Integrated belief path with its control and the invariant barrier."""

    t: np.ndarray
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    u: np.ndarray
    a_bar: float
    renormalizations: int = 0

    @property
    def sup_a(self) -> float:
        return float(self.a.max())


def a_bar(beta_bar: float, params: ModelParams) -> float:
    """Upper barrier for the asymptomatic belief of an always-active agent."""
    if params.lambda_ai <= 0:
        raise ValueError("a_bar needs lambda_ai > 0")
    return (params.lambda_sa * beta_bar + params.eta) / params.lambda_ai


def filter_rhs(b: Belief, u: float, beta_t: float, params: ModelParams) -> tuple[float, float, float]:
    """Time derivative (dS, dA, dR) of the belief; sums to zero on the simplex."""
    lsa, lai, lar, eta = params.lambda_sa, params.lambda_ai, params.lambda_ar, params.eta
    infect = lsa * beta_t * u + eta
    ds = (-infect + b.a * lai) * b.s
    da = infect * b.s + b.a * (-lai - lar + lai * b.a)
    dr = b.a * (lar + lai * b.r)
    return ds, da, dr


def integrate_filter(b0: Belief, control, beta, dt: float = DEFAULT_DT,
                     horizon: float = 100.0, params: ModelParams | None = None) -> FilterTrajectory:
    """RK4 path of the belief filter on [0, horizon].

    ``control`` is a constant activity, an array on the grid, or a callable
    ``(t, Belief) -> u`` (closed-loop policies).  ``beta`` is a constant, an
    array on the grid, or a callable of time.  The simplex constraint is
    restored by clamp-and-rescale whenever RK4 drift exceeds tolerance.
    """
    if params is None:
        raise ValueError("params is required")
    n = int(round(horizon / dt))
    t = np.linspace(0.0, n * dt, n + 1)

    # pre-evaluate beta on grid and half-grid points (RK4 stage times)
    if callable(beta):
        b_full = np.asarray([beta(tk) for tk in t], dtype=float)
        b_half = np.asarray([beta(tk + 0.5 * dt) for tk in t[:-1]], dtype=float)
    else:
        barr = np.asarray(beta, dtype=float)
        if barr.ndim == 0:
            b_full = np.full(n + 1, float(barr))
            b_half = np.full(n, float(barr))
        else:
            if barr.shape != t.shape:
                raise ValueError(f"beta samples have shape {barr.shape}, expected {t.shape}")
            b_full = barr.astype(float)
            b_half = 0.5 * (b_full[:-1] + b_full[1:])
    if not np.all(np.isfinite(b_full)):
        raise ValueError("beta path contains non-finite samples")

    if callable(control):
        u_of = control
    else:
        uarr = np.asarray(control, dtype=float)
        if uarr.ndim == 0:
            u_of = lambda tk, b: float(uarr)
        else:
            if uarr.shape != t.shape:
                raise ValueError(f"control samples have shape {uarr.shape}, expected {t.shape}")
            u_of = lambda tk, b: float(np.interp(tk, t, uarr))

    lsa, lai, lar, eta = params.lambda_sa, params.lambda_ai, params.lambda_ar, params.eta

    # scalar inner loop: the trajectory budget (200k steps over long horizons)
    # makes per-step ndarray allocation too slow
    def rhs(s, a, r, bval, u):
        infect = lsa * bval * u + eta
        return ((-infect + a * lai) * s,
                infect * s + a * (-lai - lar + lai * a),
                a * (lar + lai * r))

    s, a, r = float(b0.s), float(b0.a), float(b0.r)
    out = np.empty((n + 1, 3))
    u_out = np.empty(n + 1)
    renorms = 0
    sixth = dt / 6.0
    half = 0.5 * dt
    for k in range(n + 1):
        if not (math.isfinite(s) and math.isfinite(a) and math.isfinite(r)):
            raise RuntimeError(f"belief filter blew up at step {k} (t={t[k]:.6g})")
        u_k = u_of(t[k], Belief(max(s, 0.0), max(a, 0.0), max(r, 0.0)))
        u_k = min(max(float(u_k), 0.0), 1.0)
        out[k, 0], out[k, 1], out[k, 2] = s, a, r
        u_out[k] = u_k
        if k == n:
            break
        b0_, bh, b1 = b_full[k], b_half[k], b_full[k + 1]
        d1 = rhs(s, a, r, b0_, u_k)
        d2 = rhs(s + half * d1[0], a + half * d1[1], r + half * d1[2], bh, u_k)
        d3 = rhs(s + half * d2[0], a + half * d2[1], r + half * d2[2], bh, u_k)
        d4 = rhs(s + dt * d3[0], a + dt * d3[1], r + dt * d3[2], b1, u_k)
        s += sixth * (d1[0] + 2 * d2[0] + 2 * d3[0] + d4[0])
        a += sixth * (d1[1] + 2 * d2[1] + 2 * d3[1] + d4[1])
        r += sixth * (d1[2] + 2 * d2[2] + 2 * d3[2] + d4[2])
        total = s + a + r
        if abs(total - 1.0) > _SIMPLEX_TOL or s < 0.0 or a < 0.0 or r < 0.0:
            s, a, r = max(s, 0.0), max(a, 0.0), max(r, 0.0)
            total = s + a + r
            s, a, r = s / total, a / total, r / total
            renorms += 1
    if renorms:
        log.warning("belief filter renormalized %d times over %d steps", renorms, n)
    # barrier for the largest beta seen on the grid (equals a_bar(beta) when constant)
    return FilterTrajectory(t, out[:, 0], out[:, 1], out[:, 2], u_out,
                            a_bar(float(b_full.max()), params), renorms)
