"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``.  The heavy stationary
solves are shared through session fixtures.  Tolerances are fixed here, not
calibrated: closed forms to 1e-9, the scalar ODE to 1e-5, boundary residuals
relative to the closed-form values, Monte Carlo to three standard errors at
the stated sample sizes.
"""
import json
import time
from dataclasses import replace

import numpy as np
import pytest

from epimfg import fpk, validation
from epimfg.belief import Belief, a_bar, integrate_filter
from epimfg.cli import main as cli_main
from epimfg.fully_observed import beta_crit, stationary_decision
from epimfg.hjb import solve_hjb
from epimfg.params import ModelParams, phi_bar_a, phi_bar_i
from epimfg.trigrid import TriGrid

P = ModelParams()
SEED = 1


def report(name: str, ok: bool, detail: str = ""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


# -- shared heavy solves ---------------------------------------------------------


@pytest.fixture(scope="session")
def grid128():
    return TriGrid(128)


@pytest.fixture(scope="session")
def fig3_panels(grid128):
    crit = beta_crit(P)
    return {r: solve_hjb(r * crit, grid128, P) for r in (0.1, 0.8, 1.1)}


@pytest.fixture(scope="session")
def sweep_rows(grid128):
    ratios = [round(0.1 * k, 2) for k in range(1, 10)]
    rows, _ = validation.run_threshold_sweep(P, 128, ratios, limit_ratio=1.0)
    return rows


# -- closed forms and the stationary problem ----------------------------------------


def test_closed_form_agreement():
    t0 = time.perf_counter()
    for _ in range(1000):
        pi = phi_bar_i(P)
        pa = phi_bar_a(P)
    per_call = (time.perf_counter() - t0) / 1000.0
    pi_direct = (1.0 + 0.1 * 0.0 + 0.02 * 50.0) / (0.01 + 0.1 + 0.02)
    pa_direct = (0.0 + 0.2 * pi_direct + 0.1 * 0.0) / (0.01 + 0.2 + 0.1)
    ok = (abs(pi - pi_direct) < 1e-9 and abs(pa - pa_direct) < 1e-9
          and abs(pi - 15.3846) < 5e-3 and abs(pa - 9.9246) < 5e-3
          and per_call < 1e-3)
    report("closed-form agreement with direct Table evaluation", ok,
           f"phi_i={pi:.10f} phi_a={pa:.10f} {per_call*1e6:.1f}us/eval")


def test_stationary_regime_switch():
    t0 = time.perf_counter()
    crit = beta_crit(P)
    below = stationary_decision(np.nextafter(crit, 0.0), P)
    at = stationary_decision(crit, P)
    rate = P.lambda_sa * crit + P.eta
    v_active = (rate * phi_bar_a(P) - P.alpha) / (rate + P.gamma)
    v_isolate = P.eta / (P.gamma + P.eta) * phi_bar_a(P)
    sign_ok = True
    for b in np.linspace(0.0, 1.0, 100):
        d = stationary_decision(float(b), P)
        m = P.lambda_sa * b * (phi_bar_a(P) - d.v_s) - P.alpha
        if b < crit and m >= 0 or b > crit and m <= 0:
            sign_ok = False
    elapsed = time.perf_counter() - t0
    ok = (abs(crit - 0.30228) < 1e-3 and below.u_opt == 1 and at.u_opt == 0
          and abs(v_active - v_isolate) < 1e-9 and sign_ok and elapsed < 1.0)
    report("regime switch at the critical activity level", ok,
           f"crit={crit:.6f} branch_gap={abs(v_active - v_isolate):.2e} {elapsed:.2f}s")


def test_susceptible_ode_convergence():
    t0 = time.perf_counter()
    worst = 0.0
    for b in (0.05, 0.15, 0.29, 0.35):
        checks = validation.check_susceptible_ode(P, betas=(b,))
        worst = max(worst, abs(checks[0].value - checks[0].target))
        assert checks[0].passed, checks[0]
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 5.0
    report("susceptible ODE reaches the stationary constants", ok,
           f"worst_gap={worst:.2e} {elapsed:.1f}s")


# -- filter ---------------------------------------------------------------------------


def test_belief_barrier():
    t0 = time.perf_counter()
    ok = True
    details = []
    for b in (0.05, 0.15, 0.25):
        bar = a_bar(b, P)
        traj = integrate_filter(Belief(1.0, 0.0, 0.0), control=1.0, beta=b,
                                dt=0.01, horizon=600.0, params=P)
        margin = bar - traj.sup_a
        declining = traj.a[-1] < traj.a[-1000]  # sup attained in the transient
        ok &= margin > 0 and declining
        details.append(f"margin({b})={margin:.3e}")

        p0 = replace(P, lambda_ar=0.0)
        bar0 = a_bar(b, p0)
        traj0 = integrate_filter(Belief(1.0, 0.0, 0.0), control=1.0, beta=b,
                                 dt=0.01, horizon=2000.0, params=p0)
        ok &= bool(np.all(np.diff(traj0.a) >= -1e-12))
        ok &= abs(traj0.a[-1] - bar0) < 1e-4

        infect = P.lambda_sa * b + P.eta
        for s in np.linspace(0.0, 1.0 - bar, 50):
            expr = infect * (s - 1.0 + (infect - P.lambda_ar) / P.lambda_ai)
            ok &= expr <= 0.0
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 10.0
    report("asymptomatic belief stays under its invariant barrier", bool(ok),
           " ".join(details) + f" {elapsed:.1f}s")


def test_filter_conservation():
    traj = integrate_filter(Belief(1.0, 0.0, 0.0), control=1.0, beta=0.15,
                            dt=0.01, horizon=10.0, params=P)
    drift = float(np.max(np.abs(traj.s + traj.a + traj.r - 1.0)))
    report("filter simplex conservation per 1000 steps", drift < 1e-10,
           f"drift={drift:.2e}")


# -- belief-space policies ---------------------------------------------------------------


def test_policy_maps_qualitative(fig3_panels, grid128):
    t0 = time.perf_counter()
    checks = validation.check_policy_panels(fig3_panels, grid128)
    elapsed = time.perf_counter() - t0
    ok = all(c.passed for c in checks)
    areas = [float(fig3_panels[r].policy.mean()) for r in (0.1, 0.8, 1.1)]
    report("stationary policy maps reproduce the three-regime picture", ok,
           f"active_areas={areas} (fixture+checks {elapsed:.1f}s)")


def test_threshold_structure_without_recovery():
    t0 = time.perf_counter()
    checks, (sol, curve, p4, bb) = validation.check_threshold_structure(P, 128)
    elapsed = time.perf_counter() - t0
    ok = all(c.passed for c in checks) and elapsed < 300.0
    report("edge policy is single-switch threshold with the drift-ratio bound",
           ok, f"a_thresh={curve.edge_a_thresh:.4f} "
               f"bound={p4.lambda_sa * bb / p4.lambda_ai:.4f} {elapsed:.1f}s")


def test_threshold_sweep_monotone(sweep_rows, grid128):
    checks = validation.check_threshold_sweep(sweep_rows, grid128, limit_ratio=1.0)
    ok = all(c.passed for c in checks)
    ats = [row["a_thresh"] for row in sweep_rows if row["ratio"] != 1.0]
    report("threshold curve decreases toward the critical level", ok,
           "a_thresh=" + ",".join(f"{x:.3f}" for x in ats))


def test_boundary_residuals_shrink():
    t0 = time.perf_counter()
    res_s0_128, res_ref_128, _ = validation.check_boundary_residuals(P, 128)
    res_s0_256, res_ref_256, _ = validation.check_boundary_residuals(P, 256)
    pa, pr = phi_bar_a(P), P.phi_r
    elapsed = time.perf_counter() - t0
    ok = (res_s0_128 < 5e-3 * abs(pa) and res_ref_128 < 1e-2 * abs(pa - pr)
          and res_s0_256 <= res_s0_128 + 1e-12 and res_ref_256 <= res_ref_128)
    report("boundary identities hold and tighten under refinement", ok,
           f"s0: {res_s0_128:.2e}->{res_s0_256:.2e}  "
           f"reflect: {res_ref_128:.4f}->{res_ref_256:.4f}  {elapsed:.0f}s")


# -- density transport ---------------------------------------------------------------------


def test_fpk_mass_accounting(grid128):
    dens = fpk.gaussian_bump(grid128)
    dt = fpk.fpk_cfl_dt(grid128, P)
    traj = fpk.run_fpk(dens, np.ones(grid128.size), 0.15, dt, 500.0, P,
                       record_every=max(1, int(1.0 / dt)))
    err = float(np.max(np.abs(traj.total_mass - 1.0)))
    report("density mass conserved over horizon 500", err < 1e-6 * 500.0,
           f"max_defect={err:.2e}")


def test_fpk_tracks_filter(grid128):
    checks = validation.check_fpk_vs_filter(P, 128)
    report("density conditional mean follows the filter characteristics",
           all(c.passed for c in checks),
           f"err={checks[0].value:.4f} tol={checks[0].target:.4f}")


# -- equilibrium ------------------------------------------------------------------------------


def test_fully_observed_equilibrium_is_zero():
    t0 = time.perf_counter()
    from epimfg.fully_observed import fully_observed_mfe
    from epimfg.mfe import MFESettings

    settings = MFESettings(t_end=2000.0, n_path=401, ode_dt=0.25)
    ok = True
    iters = []
    for b0 in (0.0, 0.5, 1.0):
        rep = fully_observed_mfe(P, initial_beta=b0, settings=settings, tol=1e-6)
        ok &= rep.converged and rep.iterations <= 50
        ok &= float(np.max(rep.beta.beta)) < 1e-6
        iters.append(rep.iterations)
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 120.0
    report("full-information equilibrium is the zero path", bool(ok),
           f"iterations={iters} {elapsed:.0f}s")


# -- Monte Carlo oracles -----------------------------------------------------------------------


def test_monte_carlo_oracles(grid128):
    t0 = time.perf_counter()
    gen = validation.check_mc_generator(P, 100000, SEED)
    obj = validation.check_mc_objective(P, 100000, SEED)
    ens = validation.check_mc_vs_fpk(P, 10000, SEED, n_grid=128)
    elapsed = time.perf_counter() - t0
    checks = gen[:2] + obj + ens  # holding time, branching, two objectives, density
    ok = all(c.passed for c in checks) and elapsed < 600.0
    detail = "; ".join(f"{c.name}: {c.value:.4f} vs {c.target:.4f}" for c in checks)
    report("Monte Carlo agrees with closed forms, filter, and density", ok,
           detail + f" {elapsed:.0f}s")


def test_policy_dominance(fig3_panels, grid128):
    t0 = time.perf_counter()
    checks = validation.check_policy_dominance(
        P, fig3_panels[0.8], grid128, 0.8 * beta_crit(P), 20000, SEED)
    elapsed = time.perf_counter() - t0
    ok = all(c.passed for c in checks)
    report("solver policy dominates threshold perturbations", ok,
           f"J_solver={checks[0].value:.4f} "
           + " ".join(f"{c.target:.4f}" for c in checks) + f" {elapsed:.0f}s")


def test_validate_determinism(tmp_path):
    scenario = {
        "schema_version": 1,
        "experiment": "validate",
        "solver": {"n": 48},
        "experiment_config": {"mc_agents": 100000, "ensemble_agents": 10000,
                              "dominance_agents": 4000, "fpk_horizon": 120.0},
        "seed": SEED,
    }
    spath = tmp_path / "scenario.json"
    spath.write_text(json.dumps(scenario))
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        code = cli_main(["validate", "--scenario", str(spath), "--out", str(out),
                         "--quiet"])
        assert code == 0, f"validate run {tag} failed"
        outs.append(json.loads((out / "manifest.json").read_text()))
    same = outs[0]["outputs"] == outs[1]["outputs"]
    report("repeated validate runs produce byte-identical manifests", same,
           f"{len(outs[0]['outputs'])} artifacts")
