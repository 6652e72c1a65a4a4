import numpy as np
import pytest

from epimfg.belief import Belief, a_bar, filter_rhs, integrate_filter
from epimfg.params import ModelParams

P = ModelParams()


def test_rhs_fresh_susceptible_active():
    ds, da, dr = filter_rhs(Belief(1.0, 0.0, 0.0), u=1.0, beta_t=0.15, params=P)
    assert ds == pytest.approx(-0.1, abs=1e-15)
    assert da == pytest.approx(0.1, abs=1e-15)
    assert dr == 0.0


def test_rhs_no_drift_without_baseline():
    p = ModelParams(eta=0.0)
    assert filter_rhs(Belief(1.0, 0.0, 0.0), u=0.0, beta_t=0.7, params=p) == (0.0, 0.0, 0.0)


def test_rhs_at_asymptomatic_vertex():
    ds, da, dr = filter_rhs(Belief(0.0, 1.0, 0.0), u=0.0, beta_t=0.0, params=P)
    assert ds == 0.0
    assert da == pytest.approx(-0.1, abs=1e-15)
    assert dr == pytest.approx(0.1, abs=1e-15)


def test_rhs_tangent_to_simplex():
    rng = np.random.default_rng(7)
    for _ in range(200):
        w = rng.dirichlet([1.0, 1.0, 1.0])
        b = Belief(*w)
        ds, da, dr = filter_rhs(b, float(rng.uniform()), float(rng.uniform()), P)
        assert abs(ds + da + dr) < 1e-14


def test_a_bar_values():
    assert a_bar(0.15, P) == pytest.approx(0.5, abs=1e-15)
    assert a_bar(0.0, ModelParams(eta=0.0)) == 0.0
    assert a_bar(0.05, P) == pytest.approx(0.2, abs=1e-15)
    with pytest.raises(ValueError):
        a_bar(0.1, ModelParams(lambda_ai=0.0))


def test_monotone_rise_to_barrier_without_recovery():
    p = ModelParams(lambda_ar=0.0)
    traj = integrate_filter(Belief(1.0, 0.0, 0.0), control=1.0, beta=0.15,
                            dt=0.01, horizon=400.0, params=p)
    assert traj.a_bar == pytest.approx(0.5, abs=1e-15)
    # monotone rise (renormalization jitter is at machine level)
    assert np.all(np.diff(traj.a) >= -1e-12)
    gaps = traj.a_bar - traj.a
    assert np.all(np.diff(gaps) <= 1e-12)  # |A_t - a_bar| shrinks
    assert abs(gaps[-1]) < 1e-4


def test_barrier_strict_with_recovery():
    traj = integrate_filter(Belief(1.0, 0.0, 0.0), control=1.0, beta=0.15,
                            dt=0.01, horizon=400.0, params=P)
    assert traj.sup_a < 0.5


def test_recovered_belief_is_stationary():
    traj = integrate_filter(Belief(0.0, 0.0, 1.0), control=1.0, beta=0.3,
                            dt=0.01, horizon=20.0, params=P)
    assert np.max(np.abs(traj.r - 1.0)) < 1e-14
    assert np.max(np.abs(traj.s)) < 1e-14
    assert np.max(np.abs(traj.a)) < 1e-14


@pytest.mark.parametrize("beta", [0.05, 0.15, 0.25])
def test_barrier_derivative_expression(beta):
    # at A = a_bar the asymptomatic belief cannot increase: dA/dt <= 0 whenever S+A <= 1
    bar = a_bar(beta, P)
    infect = P.lambda_sa * beta + P.eta
    for s in np.linspace(0.0, 1.0 - bar, 50):
        expr = infect * (s - 1.0 + (infect - P.lambda_ar) / P.lambda_ai)
        assert expr <= 0.0
        _, da, _ = filter_rhs(Belief.from_sa(s, bar), 1.0, beta, P)
        assert da == pytest.approx(expr, abs=1e-12)


def test_simplex_conservation_per_1000_steps():
    traj = integrate_filter(Belief(1.0, 0.0, 0.0), control=1.0, beta=0.15,
                            dt=0.01, horizon=10.0, params=P)
    sums = traj.s + traj.a + traj.r
    assert np.max(np.abs(sums - 1.0)) < 1e-10


def test_positivity_from_interior():
    traj = integrate_filter(Belief(0.5, 0.2, 0.3), control=0.7, beta=0.4,
                            dt=0.01, horizon=200.0, params=P)
    assert traj.s.min() >= 0.0 and traj.a.min() >= 0.0 and traj.r.min() >= 0.0


def test_closed_loop_control_is_recorded():
    policy = lambda t, b: 1.0 if b.a < 0.1 else 0.0
    traj = integrate_filter(Belief(1.0, 0.0, 0.0), control=policy, beta=0.25,
                            dt=0.01, horizon=100.0, params=P)
    assert set(np.unique(traj.u)) <= {0.0, 1.0}
    assert traj.u[0] == 1.0
    # once the belief crosses the threshold the control switches off
    crossed = traj.a >= 0.1
    if crossed.any():
        k = int(np.argmax(crossed))
        assert traj.u[k] == 0.0


def test_belief_validation():
    with pytest.raises(ValueError):
        Belief(0.7, 0.5, -0.2)
    with pytest.raises(ValueError):
        Belief(0.5, 0.4, 0.2)
