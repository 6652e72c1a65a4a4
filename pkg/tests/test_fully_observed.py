import numpy as np
import pytest

from epimfg.fully_observed import (
    Regime,
    activity_margin,
    beta_crit,
    constant_policy,
    propagate_population,
    solve_susceptible_hjb,
    stationary_decision,
)
from epimfg.params import ModelParams, phi_bar_a

P = ModelParams()

# Frozen oracle values (direct formula evaluation with default constants).
BETA_CRIT = 0.30225
V_ACTIVE_015 = ((0.6 * 0.15 + 0.01) * phi_bar_a(P) - 0.9) / (0.6 * 0.15 + 0.01 + 0.01)
V_ISOLATE = 0.01 / 0.02 * phi_bar_a(P)


def test_beta_crit_default():
    assert beta_crit(P) == pytest.approx(BETA_CRIT, abs=1e-12)


def test_beta_crit_no_baseline_rate():
    p = ModelParams(eta=0.0)
    assert beta_crit(p) == pytest.approx(p.alpha / (p.lambda_sa * phi_bar_a(p)), abs=1e-14)


def test_beta_crit_zero_reward():
    assert beta_crit(ModelParams(alpha=0.0)) == 0.0


def test_stationary_decision_active():
    d = stationary_decision(0.15, P)
    assert d.regime is Regime.ACTIVE and d.u_opt == 1
    assert d.v_s == pytest.approx(V_ACTIVE_015, abs=1e-12)
    assert d.v_s == pytest.approx(0.8414166478682608, abs=1e-12)


def test_stationary_decision_isolate():
    d = stationary_decision(0.5, P)
    assert d.regime is Regime.ISOLATE and d.u_opt == 0
    assert d.v_s == pytest.approx(V_ISOLATE, abs=1e-12)
    assert d.v_s == pytest.approx(4.962779156327543, abs=1e-12)


def test_branches_agree_at_critical_level():
    crit = beta_crit(P)
    rate = P.lambda_sa * crit + P.eta
    v_active = (rate * phi_bar_a(P) - P.alpha) / (rate + P.gamma)
    v_isolate = P.eta / (P.gamma + P.eta) * phi_bar_a(P)
    assert v_active == pytest.approx(v_isolate, abs=1e-9)
    # tie resolves to isolation
    assert stationary_decision(crit, P).regime is Regime.ISOLATE


def test_activity_margin_sign_flips_at_crit():
    crit = beta_crit(P)
    for b in np.linspace(0.0, 1.0, 100):
        m = activity_margin(b, stationary_decision(float(b), P).v_s, P)
        if b < crit:
            assert m < 0.0
        elif b > crit:
            assert m > 0.0


@pytest.mark.parametrize("beta", [0.05, 0.15, 0.29, 0.35])
def test_hjb_converges_to_stationary_constant(beta):
    path = solve_susceptible_hjb(beta, horizon=2000.0, dt=0.05, params=P, v_terminal=0.0)
    assert abs(path.v[0] - stationary_decision(beta, P).v_s) < 1e-5


def test_hjb_default_terminal_is_stationary():
    path = solve_susceptible_hjb(0.15, horizon=50.0, dt=0.05, params=P)
    assert np.max(np.abs(path.v - V_ACTIVE_015)) < 1e-9
    assert np.all(path.u == 1)


def test_hjb_no_infection_risk():
    p = ModelParams(eta=0.0)
    path = solve_susceptible_hjb(0.0, horizon=500.0, dt=0.05, params=p)
    assert path.v[0] == pytest.approx(-p.alpha / p.gamma, abs=1e-8)
    assert np.all(path.u == 1)


def test_hjb_zero_reward_never_active():
    p = ModelParams(alpha=0.0)
    path = solve_susceptible_hjb(1.0, horizon=1000.0, dt=0.05, params=p, v_terminal=0.0)
    expect = p.eta * phi_bar_a(p) / (p.gamma + p.eta)
    assert abs(path.v[0] - expect) < 1e-6
    assert path.u[0] == 0


def test_hjb_rejects_nonfinite_beta():
    with pytest.raises(ValueError):
        solve_susceptible_hjb(np.nan, horizon=1.0, dt=0.05, params=P)


def test_hjb_rk4_order():
    # halving dt should shrink the error roughly 16x; demand at least 10x
    exact = stationary_decision(0.15, P).v_s
    errs = []
    for dt in (0.8, 0.4):
        path = solve_susceptible_hjb(0.15, horizon=40.0, dt=dt, params=P, v_terminal=0.0)
        errs.append(abs(path.v[0] - (exact + (0.0 - exact) * np.exp(-_decay_rate() * 40.0))))
    assert errs[0] / max(errs[1], 1e-16) > 10.0


def _decay_rate():
    # backward contraction rate on the active branch at beta = 0.15
    return P.gamma + P.eta + P.lambda_sa * 0.15


def test_propagate_isolating_population_decays_via_eta():
    policies = {"base": constant_policy(0.0, 0.0, 0.0)}
    state = propagate_population(policies, [1, 0, 0, 0, 0], dt=0.05, horizon=200.0, params=P)
    expect = np.exp(-P.eta * state.t)
    assert np.max(np.abs(state.fractions["base"][:, 0] - expect)) < 1e-10
    assert np.all(state.beta == 0.0)


def test_propagate_symptomatic_absorption_split():
    policies = {"base": constant_policy(1.0, 0.0, 0.0)}
    state = propagate_population(policies, [0, 0, 1, 0, 0], dt=0.05, horizon=600.0, params=P)
    frac = state.fractions["base"]
    assert frac[-1, 4] == pytest.approx(P.lambda_id / (P.lambda_id + P.lambda_ir), abs=1e-6)


def test_propagate_absorbing_state_constant():
    policies = {"base": constant_policy(1.0, 1.0, 1.0)}
    state = propagate_population(policies, [0, 0, 0, 1, 0], dt=0.1, horizon=50.0, params=P)
    assert np.max(np.abs(state.fractions["base"] - np.array([0, 0, 0, 1, 0]))) < 1e-14


def test_propagate_conserves_mass():
    policies = {"base": constant_policy(1.0, 1.0, 0.0)}
    state = propagate_population(policies, [0.9, 0.1, 0, 0, 0], dt=0.05, horizon=300.0, params=P)
    sums = state.fractions["base"].sum(axis=1)
    assert np.max(np.abs(sums - 1.0)) < 1e-8


def test_propagate_heterogeneous_mixture():
    from epimfg.params import Attribute

    p = ModelParams(attributes=(Attribute("young", 0.5, {"lambda_ir": 0.2}),
                                Attribute("old", 0.5, {"lambda_ir": 0.05})))
    policies = {"young": constant_policy(1.0, 1.0, 0.0), "old": constant_policy(1.0, 1.0, 0.0)}
    state = propagate_population(policies, [0.5, 0.5, 0, 0, 0], dt=0.05, horizon=10.0, params=p)
    # beta is the p(theta)-weighted mixture of the per-type contributions
    mix = 0.5 * state.fractions["young"][:, 1] + 0.5 * state.fractions["old"][:, 1]
    assert np.max(np.abs(state.beta - mix)) < 1e-12


def test_propagate_rejects_bad_pmf():
    policies = {"base": constant_policy(0.0)}
    with pytest.raises(RuntimeError):
        propagate_population(policies, [0.9, 0.0, 0.0, 0.0, 0.0], dt=0.05, horizon=1.0, params=P)
