"""Damped fixed-point iteration between best response and population response.

The unknown is the infected-activity path beta_t on a uniform grid.  One sweep
of the map applies the best-response operator (solve the relevant HJB given
beta) and the population-response operator (push the population forward under
those policies, reading the activity level off the evolving distribution), per
agent type, mixed by the type weights.  Pure Picard tends to oscillate against
bang-bang best responses, so iterates are relaxed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from epimfg import fpk
from epimfg.fully_observed import propagate_population, solve_susceptible_hjb
from epimfg.hjb import solve_hjb
from epimfg.params import ModelParams
from epimfg.trigrid import TriGrid


@dataclass(frozen=True)
class MeanFieldPath:
    """Activity level of infected agents on a uniform grid; constant beyond it."""

    t: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        if self.t.shape != self.beta.shape or self.t.ndim != 1:
            raise ValueError("t and beta need matching 1-d shapes")
        if np.any(self.beta < -1e-12) or np.any(self.beta > 1.0 + 1e-12):
            raise ValueError("beta samples must lie in [0, 1]")
        if not np.all(np.isfinite(self.beta)):
            raise ValueError("beta samples must be finite")

    @classmethod
    def constant(cls, value: float, t_end: float, n_samples: int = 401) -> "MeanFieldPath":
        t = np.linspace(0.0, t_end, n_samples)
        return cls(t, np.full(n_samples, float(value)))

    def interp(self, t: float) -> float:
        return float(np.interp(t, self.t, self.beta))

    @property
    def max_value(self) -> float:
        return float(self.beta.max())

    def sup_distance(self, other: "MeanFieldPath") -> float:
        return float(np.max(np.abs(self.beta - other.beta)))


@dataclass
class MFESettings:
    t_end: float = 2000.0
    n_path: int = 401
    ode_dt: float = 0.25          # fully-observed inner solvers
    grid_n: int = 48              # partially-observed belief grid
    policy_dt: float = 25.0       # spacing of stored policy slices
    bump_center: tuple[float, float] = (0.98, 0.01)
    bump_width: float = 0.02
    rho_0: tuple[float, ...] = (1.0, 0.0, 0.0, 0.0, 0.0)


@dataclass
class EquilibriumReport:
    converged: bool
    iterations: int
    residuals: list[float]
    beta: MeanFieldPath
    mode: str
    damping: float
    tol: float
    final_residual: float
    policies: dict = field(default_factory=dict)


class PolicySequence:
    """Time-stamped policy slices on a TriGrid with floor lookup."""

    def __init__(self, times: np.ndarray, slices: list[np.ndarray]):
        self.times = np.asarray(times, dtype=float)
        self.slices = slices

    def at(self, t: float) -> np.ndarray:
        k = int(np.clip(np.searchsorted(self.times, t, side="right") - 1,
                        0, len(self.slices) - 1))
        return self.slices[k]


def _as_path(beta, t_end: float, n_path: int) -> MeanFieldPath:
    if isinstance(beta, MeanFieldPath):
        return beta
    arr = np.asarray(beta, dtype=float)
    if arr.ndim == 0:
        return MeanFieldPath.constant(float(arr), t_end, n_path)
    t = np.linspace(0.0, t_end, arr.size)
    return MeanFieldPath(t, arr)


def best_response(beta: MeanFieldPath, params: ModelParams, mode: str,
                  settings: MFESettings | None = None) -> dict:
    """Optimal policies per agent type against a given activity path."""
    settings = settings or MFESettings()
    out = {}
    for attr in params.attributes:
        p = params.for_attribute(attr.id)
        try:
            if mode == "fully-observed":
                vpath = solve_susceptible_hjb(
                    np.array([beta.interp(t) for t in _ode_grid(settings)]),
                    settings.t_end, settings.ode_dt, p)
                out[attr.id] = vpath
            elif mode == "partially-observed":
                grid = TriGrid(settings.grid_n)
                save = np.arange(0.0, settings.t_end + 1e-9, settings.policy_dt)
                sol = solve_hjb(beta, grid, p, t_end=settings.t_end, save_times=save)
                times = np.array([pg.t for _, pg in sol.snapshots])
                slices = [pg.u for _, pg in sol.snapshots]
                if not slices:  # stationary stop before any save point
                    times, slices = np.array([0.0]), [sol.policy]
                out[attr.id] = PolicySequence(times, slices)
            else:
                raise ValueError(f"unknown mode {mode!r}")
        except ValueError:
            raise
        except Exception as exc:
            raise RuntimeError(f"best response failed for attribute {attr.id!r}") from exc
    return out


def _ode_grid(settings: MFESettings) -> np.ndarray:
    n = int(round(settings.t_end / settings.ode_dt))
    return np.linspace(0.0, n * settings.ode_dt, n + 1)


def population_response(policies: Mapping[str, object], params: ModelParams, mode: str,
                        settings: MFESettings | None = None) -> MeanFieldPath:
    """Activity path generated by the population under the given policies."""
    settings = settings or MFESettings()
    t_path = np.linspace(0.0, settings.t_end, settings.n_path)
    if mode == "fully-observed":
        wrapped = {}
        for attr in params.attributes:
            pol = policies[attr.id]
            if hasattr(pol, "control_fn"):  # SusceptibleValuePath
                u_s = pol.control_fn()
                wrapped[attr.id] = lambda t, _u=u_s: (_u(t), 0.0, 0.0)
            else:
                wrapped[attr.id] = pol
        state = propagate_population(wrapped, np.asarray(settings.rho_0),
                                     settings.ode_dt, settings.t_end, params)
        beta = np.interp(t_path, state.t, state.beta)
        return MeanFieldPath(t_path, np.clip(beta, 0.0, 1.0))
    if mode != "partially-observed":
        raise ValueError(f"unknown mode {mode!r}")

    grid = TriGrid(settings.grid_n)
    dt = fpk.fpk_cfl_dt(grid, params)
    n_steps = int(round(settings.t_end / dt))
    dens = {a.id: fpk.gaussian_bump(grid, settings.bump_center, settings.bump_width)
            for a in params.attributes}
    t_rec = np.empty(n_steps + 1)
    b_rec = np.empty(n_steps + 1)
    for k in range(n_steps + 1):
        t = k * dt
        b = 0.0
        slices = {}
        for a in params.attributes:
            u = policies[a.id].at(t)
            slices[a.id] = u
            b += a.prob * grid.integrate(grid.a * u * dens[a.id].p)
        b = float(np.clip(b, 0.0, 1.0))
        t_rec[k], b_rec[k] = t, b
        if k == n_steps:
            break
        for a in params.attributes:
            p = params.for_attribute(a.id)
            dens[a.id] = fpk.fpk_step(dens[a.id], slices[a.id], b, dt, p)
    return MeanFieldPath(t_path, np.clip(np.interp(t_path, t_rec, b_rec), 0.0, 1.0))


def find_mfe(initial_beta, params: ModelParams, mode: str = "fully-observed",
             damping: float = 0.5, tol: float = 1e-6, max_iter: int = 50,
             settings: MFESettings | None = None,
             averaging: bool = False) -> EquilibriumReport:
    """Relaxed Picard iteration toward a fixed point of response-then-population.

    Convergence is declared when the sup-norm gap between an iterate and its
    image drops below ``tol``; hitting ``max_iter`` returns a non-converged
    report with the residual history rather than raising.

    ``averaging`` switches to a decaying relaxation weight (fictitious play).
    That stabilizes the iterates when the bang-bang best response makes the
    fixed-point map jump; note the sup-norm residual itself cannot shrink
    below the jump size in that regime, so such runs typically end
    non-converged with a stabilized path.
    """
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    settings = settings or MFESettings()
    beta_k = _as_path(initial_beta, settings.t_end, settings.n_path)
    residuals: list[float] = []
    policies: dict = {}
    for it in range(1, max_iter + 1):
        policies = best_response(beta_k, params, mode, settings)
        image = population_response(policies, params, mode, settings)
        resid = image.sup_distance(beta_k)
        residuals.append(resid)
        if resid < tol:
            return EquilibriumReport(True, it, residuals, beta_k, mode, damping,
                                     tol, resid, policies)
        lam = damping / (1.0 + damping * (it - 1)) if averaging else damping
        mixed = (1.0 - lam) * beta_k.beta + lam * image.beta
        beta_k = MeanFieldPath(beta_k.t, np.clip(mixed, 0.0, 1.0))
    return EquilibriumReport(False, max_iter, residuals, beta_k, mode, damping,
                             tol, residuals[-1], policies)


def distinct_equilibria(reports: list[EquilibriumReport], tol: float) -> list[EquilibriumReport]:
    """Keep one representative per equilibrium, separating paths > 10*tol apart."""
    kept: list[EquilibriumReport] = []
    for rep in reports:
        if all(rep.beta.sup_distance(other.beta) > 10.0 * tol for other in kept):
            kept.append(rep)
    return kept
