"""Cross-check battery: every solver checked against an independent oracle.

Closed forms are compared with direct formula evaluation, the scalar HJB with
its stationary solution, the filter with its invariant barrier, the density
transport with the filter characteristics and with Monte Carlo, and the
belief-space policy with perturbation dominance of its realized objective.
The battery both powers the ``validate`` CLI experiment and backs the
acceptance suite.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from epimfg import agents as ag
from epimfg import fpk
from epimfg.belief import Belief, a_bar, filter_rhs, integrate_filter
from epimfg.fully_observed import (
    activity_margin,
    beta_crit,
    fully_observed_mfe,
    solve_susceptible_hjb,
    stationary_decision,
)
from epimfg.hjb import extract_threshold, solve_hjb
from epimfg.mfe import MFESettings
from epimfg.params import ModelParams, phi_bar_a, phi_bar_i
from epimfg.trigrid import TriGrid


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    target: float
    tol: float
    detail: str = ""

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed),
                "value": float(self.value), "target": float(self.target),
                "tol": float(self.tol), "detail": self.detail}


def _check(name, value, target, tol, detail="") -> Check:
    return Check(name, bool(abs(value - target) <= tol), float(value),
                 float(target), float(tol), detail)


def _check_le(name, value, bound, detail="") -> Check:
    return Check(name, bool(value <= bound), float(value), float(bound),
                 0.0, detail)


# -- closed forms and the stationary susceptible problem -----------------------


def check_closed_forms(params: ModelParams) -> list[Check]:
    pi_direct = (params.c_h_i + params.lambda_ir * params.phi_r
                 + params.lambda_id * params.phi_d) \
        / (params.gamma + params.lambda_ir + params.lambda_id)
    pa_direct = (params.c_h_a + params.lambda_ai * pi_direct
                 + params.lambda_ar * params.phi_r) \
        / (params.gamma + params.lambda_ai + params.lambda_ar)
    return [
        _check("phi_bar_i matches direct evaluation", phi_bar_i(params), pi_direct, 1e-9),
        _check("phi_bar_a matches direct evaluation", phi_bar_a(params), pa_direct, 1e-9),
    ]


def check_stationary_regimes(params: ModelParams, n_grid: int = 100) -> list[Check]:
    crit = beta_crit(params)
    rate = params.lambda_sa * crit + params.eta
    v_active = (rate * phi_bar_a(params) - params.alpha) / (rate + params.gamma)
    v_isolate = params.eta / (params.gamma + params.eta) * phi_bar_a(params)
    checks = [_check("stationary branches agree at the critical level",
                     v_active, v_isolate, 1e-9)]
    bad_sign = 0
    for b in np.linspace(0.0, 1.0, n_grid):
        m = activity_margin(float(b), stationary_decision(float(b), params).v_s, params)
        if (b < crit and m >= 0.0) or (b > crit and m <= 0.0):
            bad_sign += 1
    checks.append(_check_le("activity margin sign violations on beta grid",
                            bad_sign, 0, f"grid of {n_grid} points"))
    flip = stationary_decision(crit, params).u_opt
    checks.append(_check_le("tie at critical level resolves to isolation", flip, 0))
    return checks


def check_susceptible_ode(params: ModelParams,
                          betas=(0.05, 0.15, 0.29, 0.35)) -> list[Check]:
    out = []
    for b in betas:
        path = solve_susceptible_hjb(b, horizon=2000.0, dt=0.05, params=params,
                                     v_terminal=0.0)
        target = stationary_decision(b, params).v_s
        out.append(_check(f"susceptible ODE reaches stationary value (beta={b})",
                          path.v[0], target, 1e-5))
    return out


# -- filter properties -----------------------------------------------------------


def check_filter_props(params: ModelParams,
                       betas=(0.05, 0.15, 0.25)) -> list[Check]:
    checks = []
    for b in betas:
        bar = a_bar(b, params)
        traj = integrate_filter(Belief(1.0, 0.0, 0.0), control=1.0, beta=b,
                                dt=0.01, horizon=2000.0, params=params)
        checks.append(_check_le(f"active-agent belief stays under barrier (beta={b})",
                                traj.sup_a, bar - 1e-12,
                                f"margin={bar - traj.sup_a:.3e}"))
        worst = 0.0
        infect = params.lambda_sa * b + params.eta
        for s in np.linspace(0.0, 1.0 - bar, 50):
            expr = infect * (s - 1.0 + (infect - params.lambda_ar) / params.lambda_ai)
            _, da, _ = filter_rhs(Belief.from_sa(s, bar), 1.0, b, params)
            worst = max(worst, expr, abs(expr - da))
        checks.append(_check_le(f"barrier derivative nonpositive (beta={b})", worst, 1e-12))
    return checks


def check_filter_monotone_no_recovery(params: ModelParams,
                                      betas=(0.05, 0.15, 0.25)) -> list[Check]:
    from dataclasses import replace

    p0 = replace(params, lambda_ar=0.0)
    checks = []
    for b in betas:
        bar = a_bar(b, p0)
        traj = integrate_filter(Belief(1.0, 0.0, 0.0), control=1.0, beta=b,
                                dt=0.01, horizon=2000.0, params=p0)
        checks.append(_check_le(f"belief rise is monotone without recovery (beta={b})",
                                float(-np.min(np.diff(traj.a))), 1e-12))
        checks.append(_check(f"belief reaches barrier without recovery (beta={b})",
                             traj.a[-1], bar, 1e-4))
    return checks


def check_filter_conservation(params: ModelParams) -> list[Check]:
    traj = integrate_filter(Belief(1.0, 0.0, 0.0), control=1.0, beta=0.15,
                            dt=0.01, horizon=10.0, params=params)
    drift = float(np.max(np.abs(traj.s + traj.a + traj.r - 1.0)))
    return [_check_le("filter simplex drift per 1000 steps", drift, 1e-10)]


# -- belief-space policies --------------------------------------------------------


def solve_policy_panels(params: ModelParams, n: int, ratios=(0.1, 0.8, 1.1)):
    crit = beta_crit(params)
    grid = TriGrid(n)
    return {r: solve_hjb(r * crit, grid, params) for r in ratios}, grid


def check_policy_panels(panels, grid: TriGrid) -> list[Check]:
    ratios = sorted(panels)
    checks = []
    interior = grid.interior_mask
    high = panels[ratios[-1]]
    checks.append(_check_le("highest-ratio panel isolates on the interior",
                            int(high.policy[interior].sum()), 0))
    for r in ratios[:-1]:
        pol = panels[r].policy
        both = 0 < int(pol.sum()) < pol.size
        checks.append(_check_le(f"panel at ratio {r} contains both regions",
                                0 if both else 1, 0))
    areas = [float(panels[r].policy.mean()) for r in ratios]
    monotone = all(b <= a + 1e-12 for a, b in zip(areas, areas[1:]))
    checks.append(_check_le("active-region area is nonincreasing in beta",
                            0 if monotone else 1, 0,
                            "areas=" + ",".join(f"{x:.4f}" for x in areas)))
    for r in ratios:
        checks.append(_check_le(f"stationarity reached at ratio {r}",
                                0 if panels[r].converged else 1, 0,
                                f"residual={panels[r].residual:.2e}"))
    return checks


def run_threshold_sweep(params: ModelParams, n: int, ratios, limit_ratio=1.0):
    crit = beta_crit(params)
    grid = TriGrid(n)
    rows = []
    for r in list(ratios) + [limit_ratio]:
        sol = solve_hjb(r * crit, grid, params)
        curve = extract_threshold(sol.policy, grid)
        rows.append({"ratio": float(r), "beta_bar": float(r * crit),
                     "a_thresh": float(curve.edge_a_thresh),
                     "a_bar": float(a_bar(r * crit, params)),
                     "switches": int(curve.edge_switches)})
    return rows, grid


def check_threshold_sweep(rows, grid: TriGrid, limit_ratio=1.0) -> list[Check]:
    swept = [row for row in rows if row["ratio"] != limit_ratio]
    ats = [row["a_thresh"] for row in swept]
    monotone = all(b <= a + 1e-12 for a, b in zip(ats, ats[1:]))
    checks = [_check_le("extracted threshold nonincreasing across sweep",
                        0 if monotone else 1, 0,
                        "a_thresh=" + ",".join(f"{x:.4f}" for x in ats))]
    limit_rows = [row for row in rows if row["ratio"] == limit_ratio]
    if limit_rows:
        checks.append(_check_le("threshold below grid resolution at the critical level",
                                limit_rows[0]["a_thresh"], grid.h))
    bars = [row["a_bar"] for row in swept]
    increasing = all(b > a for a, b in zip(bars, bars[1:]))
    checks.append(_check_le("barrier increasing across sweep", 0 if increasing else 1, 0))
    second_diff = float(np.max(np.abs(np.diff(bars, 2)))) if len(bars) > 2 else 0.0
    checks.append(_check_le("barrier linear in beta", second_diff, 1e-12))
    return checks


def check_threshold_structure(params: ModelParams, n: int) -> tuple[list[Check], object]:
    """Single-switch threshold on the s+a=1 edge in the no-recovery regime."""
    from dataclasses import replace

    p4 = replace(params, lambda_ar=0.0, lambda_ai=1.0)
    crit = beta_crit(p4)
    bb = 0.5 * crit
    grid = TriGrid(n)
    sol = solve_hjb(bb, grid, p4)
    curve = extract_threshold(sol.policy, grid)
    bound = p4.lambda_sa * bb / p4.lambda_ai
    checks = [
        _check("edge policy has exactly one switch", curve.edge_switches, 1, 0),
        _check_le("threshold exceeds the filter drift ratio",
                  bound + 1e-12, curve.edge_a_thresh,
                  f"a_thresh={curve.edge_a_thresh:.4f} bound={bound:.4f}"),
    ]
    return checks, (sol, curve, p4, bb)


def check_boundary_residuals(params: ModelParams, n: int, ratio: float = 0.8):
    """Emergent boundary identities of an unconstrained full-triangle solve."""
    crit = beta_crit(params)
    grid = TriGrid(n)
    sol = solve_hjb(ratio * crit, grid, params, mode="full")
    pa, pr = phi_bar_a(params), params.phi_r
    s0 = grid.s0_mask
    res_s0 = float(np.max(np.abs(sol.phi[s0] - (grid.a[s0] * pa + (1 - grid.a[s0]) * pr))))
    ident = sol.phi - sol.phi[grid.reflect] - (2 * grid.a + grid.s - 1.0) * (pa - pr)
    res_ref = float(np.max(np.abs(ident)))
    return res_s0, res_ref, sol


# -- density transport -------------------------------------------------------------


def check_fpk_mass(params: ModelParams, n: int, horizon: float = 500.0):
    grid = TriGrid(n)
    dens = fpk.gaussian_bump(grid)
    dt = fpk.fpk_cfl_dt(grid, params)
    traj = fpk.run_fpk(dens, np.ones(grid.size), 0.15, dt, horizon, params,
                       record_every=max(1, int(1.0 / dt)))
    err = float(np.max(np.abs(traj.total_mass - 1.0)))
    return [_check_le("density mass conserved over the horizon", err,
                      1e-6 * horizon)], traj


def check_fpk_vs_filter(params: ModelParams, n: int, horizon: float = 60.0,
                        beta: float = 0.15) -> list[Check]:
    grid = TriGrid(n)
    dens = fpk.gaussian_bump(grid)
    dt = fpk.fpk_cfl_dt(grid, params)
    traj = fpk.run_fpk(dens, np.ones(grid.size), beta, dt, horizon, params)
    s0, a0 = dens.mean_belief()
    ft = integrate_filter(Belief.from_sa(s0, a0), control=1.0, beta=beta,
                          dt=0.01, horizon=horizon, params=params)
    tol = max(2 * grid.h, 0.02)
    err_s = float(np.max(np.abs(traj.mean_s - np.interp(traj.t, ft.t, ft.s))))
    err_a = float(np.max(np.abs(traj.mean_a - np.interp(traj.t, ft.t, ft.a))))
    return [_check_le("density conditional mean follows the filter path",
                      max(err_s, err_a), tol)]


# -- Monte Carlo oracles -------------------------------------------------------------


def check_mc_generator(params: ModelParams, n_agents: int, seed: int) -> list[Check]:
    hold = np.empty(n_agents)
    to_i = 0
    records = []
    for k in range(n_agents):
        rec = ag.simulate_agent(ag.full_info_policy(0.0), 0.0, params,
                                ag.agent_rng(seed, k), x0=ag.EpiState.A, t_max=4000.0)
        records.append(rec)
        hold[k] = rec.times[1] - rec.times[0]
        to_i += rec.states[1] is ag.EpiState.I
    mean_hold = 1.0 / (params.lambda_ai + params.lambda_ar)
    branch = params.lambda_ai / (params.lambda_ai + params.lambda_ar)
    checks = [
        _check("holding time in the asymptomatic state", float(hold.mean()),
               mean_hold, 0.01 * mean_hold),
        _check("symptom-onset branching probability", to_i / n_agents, branch,
               0.01 * branch),
    ]
    rates = ag.empirical_rates(records)
    for name, val in rates.items():
        true = getattr(params, name)
        checks.append(_check(f"empirical rate {name}", val, true, 0.02 * true))
    return checks


def check_mc_objective(params: ModelParams, n_agents: int, seed: int,
                       beta: float = 0.15) -> list[Check]:
    d = stationary_decision(beta, params)
    est_s = ag.estimate_objective(ag.full_info_policy(float(d.u_opt)), beta, params,
                                  n=n_agents, seed=seed)
    est_i = ag.estimate_objective(ag.full_info_policy(0.0), beta, params,
                                  n=n_agents, seed=seed + 1, x0=ag.EpiState.I)
    return [
        Check("realized objective matches stationary susceptible value",
              est_s.within(d.v_s), est_s.mean, d.v_s, 3 * est_s.stderr,
              f"stderr={est_s.stderr:.4f}"),
        Check("realized objective matches symptomatic closed form",
              est_i.within(phi_bar_i(params)), est_i.mean, phi_bar_i(params),
              3 * est_i.stderr, f"stderr={est_i.stderr:.4f}"),
    ]


def check_mc_vs_fpk(params: ModelParams, n_agents: int, seed: int,
                    n_grid: int = 128, beta: float = 0.15,
                    horizon: float = 150.0) -> list[Check]:
    stats = ag.ensemble_run(ag.full_info_policy(1.0, 1.0, 0.0), params,
                            n=n_agents, seed=seed, beta=beta, t_max=horizon,
                            dt_bin=1.0)
    grid = TriGrid(n_grid)
    dens = fpk.gaussian_bump(grid)
    dt = fpk.fpk_cfl_dt(grid, params)
    traj = fpk.run_fpk(dens, np.ones(grid.size), beta, dt, horizon, params,
                       record_every=max(1, int(1.0 / dt)))
    rho_a = np.interp(stats.t, traj.t, traj.rho_a)
    err = float(np.max(np.abs(stats.fraction_of(ag.EpiState.A) - rho_a)))
    return [_check_le("ensemble asymptomatic fraction tracks the density", err, 0.02)]


def check_mc_determinism(params: ModelParams, seed: int) -> list[Check]:
    a = ag.ensemble_run(ag.full_info_policy(1.0), params, n=500, seed=seed,
                        beta=0.2, t_max=50.0)
    b = ag.ensemble_run(ag.full_info_policy(1.0), params, n=500, seed=seed,
                        beta=0.2, t_max=50.0)
    same = np.array_equal(a.counts, b.counts) and np.array_equal(a.beta_hat, b.beta_hat)
    return [_check_le("ensemble replay is bit-identical", 0 if same else 1, 0)]


def check_policy_dominance(params: ModelParams, panel_sol, grid: TriGrid,
                           beta: float, n_agents: int, seed: int,
                           shifts=(-0.1, -0.05, 0.05, 0.1, 0.2)) -> list[Check]:
    """The solver policy's realized cost is not beaten by threshold perturbations."""
    curve = extract_threshold(panel_sol.policy, grid)

    def curve_decision(shift: float):
        s_axis, at = curve.s, np.clip(curve.a_thresh + shift, 0.0, 1.0)
        return lambda b: 1.0 if b.a < np.interp(b.s, s_axis, at) else 0.0

    def grid_decision(b):
        i = int(np.clip(round(b.s * grid.n), 0, grid.n))
        j = int(np.clip(round(b.a * grid.n), 0, grid.n - i))
        return float(panel_sol.policy[grid.index(i, j)])

    pol0, _ = ag.belief_feedback_policy(grid_decision, beta, params, horizon=600.0)
    base = ag.estimate_objective(pol0, beta, params, n=n_agents, seed=seed)
    checks = []
    for m, shift in enumerate(shifts):
        pol, _ = ag.belief_feedback_policy(curve_decision(shift), beta, params,
                                           horizon=600.0)
        est = ag.estimate_objective(pol, beta, params, n=n_agents, seed=seed)
        ok = base.mean <= est.mean + 3.0 * est.stderr
        checks.append(Check(f"solver policy dominates threshold shift {shift:+.2f}",
                            ok, base.mean, est.mean, 3.0 * est.stderr,
                            f"perturbed stderr={est.stderr:.4f}"))
    return checks


def check_mfe_full_observation(params: ModelParams,
                               initials=(0.0, 0.5, 1.0)) -> list[Check]:
    settings = MFESettings(t_end=400.0, n_path=201, ode_dt=0.25)
    checks = []
    for b0 in initials:
        rep = fully_observed_mfe(params, initial_beta=b0, settings=settings, tol=1e-6)
        sup = float(np.max(rep.beta.beta))
        ok = rep.converged and rep.iterations <= 50 and sup < 1e-6
        checks.append(Check(f"full-information equilibrium is the zero path (init {b0})",
                            ok, sup, 0.0, 1e-6,
                            f"iterations={rep.iterations}"))
    return checks
