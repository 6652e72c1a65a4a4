import numpy as np
import pytest

from epimfg.belief import Belief, integrate_filter
from epimfg.fpk import (
    BeliefDensity,
    asymptomatic_mass,
    drift_field,
    fpk_cfl_dt,
    fpk_step,
    gaussian_bump,
    run_fpk,
    symptomatic_branch_rates,
    symptomatic_branch_step,
)
from epimfg.params import ModelParams
from epimfg.trigrid import TriGrid

P = ModelParams()


@pytest.fixture(scope="module")
def grid():
    return TriGrid(64)


def test_asymptomatic_mass_uniform_density(grid):
    # integral of 2a over the unit triangle is 1/3; midpoint quadrature is O(1/n)
    dens = BeliefDensity(grid, np.full(grid.size, 2.0))
    assert abs(asymptomatic_mass(dens) - 1.0 / 3.0) < 3.2 / grid.n


def test_asymptomatic_mass_point_mass(grid):
    p = np.zeros(grid.size)
    k = grid.index(32, 16)  # (0.5, 0.25)
    m = 0.7
    p[k] = m / grid.cell_area
    dens = BeliefDensity(grid, p)
    assert asymptomatic_mass(dens) == pytest.approx(0.25 * m, abs=1e-12)


def test_asymptomatic_mass_empty(grid):
    assert asymptomatic_mass(BeliefDensity(grid, np.zeros(grid.size))) == 0.0


def test_branch_rates_examples(grid):
    # build p with integral a*p = 0.1 exactly (scaled uniform)
    p = np.full(grid.size, 2.0)
    p *= 0.1 / asymptomatic_mass(BeliefDensity(grid, p))
    dens = BeliefDensity(grid, p, rho_i=0.0)
    di, dr, dd = symptomatic_branch_rates(dens, P)
    assert di == pytest.approx(P.lambda_ai * 0.1, abs=1e-12)
    assert dr == 0.0 and dd == 0.0

    dens_i = BeliefDensity(grid, np.zeros(grid.size), rho_i=1.0)
    di, dr, dd = symptomatic_branch_rates(dens_i, P)
    assert dd == pytest.approx(P.lambda_id, abs=1e-15)
    assert dr == pytest.approx(P.lambda_ir, abs=1e-15)
    assert di == pytest.approx(-(P.lambda_ir + P.lambda_id), abs=1e-15)

    zeros = BeliefDensity(grid, np.zeros(grid.size))
    assert symptomatic_branch_rates(zeros, P) == (0.0, 0.0, 0.0)


def test_branch_step_conserves_and_splits(grid):
    dens = BeliefDensity(grid, np.zeros(grid.size), rho_i=1.0, rho_r_post=0.2, rho_d=0.1)
    ri, rr, rd = symptomatic_branch_step(dens, dt=0.5, params=P)
    assert ri + rr + rd == pytest.approx(1.3, abs=1e-14)
    # splits in proportion lambda_ir : lambda_id
    assert (rr - 0.2) / (rd - 0.1) == pytest.approx(P.lambda_ir / P.lambda_id, rel=1e-12)


def test_empty_triangle_decays_symptomatic(grid):
    dens = BeliefDensity(grid, np.zeros(grid.size), rho_i=1.0)
    dt = 0.05
    for _ in range(200):
        dens = fpk_step(dens, np.zeros(grid.size), 0.3, dt, P)
    assert np.all(dens.p == 0.0)
    expect = np.exp(-(P.lambda_ir + P.lambda_id) * 200 * dt)
    assert dens.rho_i == pytest.approx(expect, rel=1e-12)
    assert dens.total_mass == pytest.approx(1.0, abs=1e-13)


def test_bump_drifts_toward_more_asymptomatic(grid):
    dens = gaussian_bump(grid, center=(0.9, 0.05), width=0.03)
    dt = fpk_cfl_dt(grid, P)
    traj = run_fpk(dens, np.ones(grid.size), 0.3, dt, 5.0, P)
    assert traj.mean_a[-1] > traj.mean_a[0]
    assert traj.mean_s[-1] < traj.mean_s[0]


def test_stationary_on_axis_without_eta():
    g = TriGrid(48)
    p0 = ModelParams(eta=0.0)
    # all drift components vanish on the a = 0 line when eta = u = 0
    fs, fa = drift_field(g, np.zeros(g.size), 0.5, p0)
    axis = g.a0_mask
    assert np.max(np.abs(fs[axis])) == 0.0
    assert np.max(np.abs(fa[axis])) == 0.0


def test_mass_ledger_exact_per_step(grid):
    dens = gaussian_bump(grid)
    dt = fpk_cfl_dt(grid, P)
    before = dens.total_mass
    stepped = fpk_step(dens, np.ones(grid.size), 0.15, dt, P)
    # triangle loss equals branch gain to rounding
    tri_loss = dens.triangle_mass - stepped.triangle_mass
    branch_gain = (stepped.rho_i + stepped.rho_r_post + stepped.rho_d) \
        - (dens.rho_i + dens.rho_r_post + dens.rho_d)
    assert tri_loss == pytest.approx(branch_gain, rel=1e-8, abs=1e-15)
    assert stepped.total_mass == pytest.approx(before, abs=1e-12)


def test_mass_conservation_long_run(grid):
    dens = gaussian_bump(grid)
    dt = fpk_cfl_dt(grid, P)
    traj = run_fpk(dens, np.ones(grid.size), 0.15, dt, 100.0, P, record_every=50)
    assert np.max(np.abs(traj.total_mass - 1.0)) < 1e-6 * 100.0


def test_positivity(grid):
    dens = gaussian_bump(grid)
    dt = fpk_cfl_dt(grid, P)
    traj = run_fpk(dens, np.ones(grid.size), 0.25, dt, 50.0, P, record_every=100)
    assert traj.final.p.min() >= 0.0


def test_density_rejects_bad_policy_shape(grid):
    dens = gaussian_bump(grid)
    with pytest.raises(ValueError):
        fpk_step(dens, np.ones(7), 0.1, 0.01, P)


def test_step_accepts_policy_grid_wrapper(grid):
    from epimfg.hjb import PolicyGrid

    dens = gaussian_bump(grid)
    pg = PolicyGrid(t=0.0, u=np.ones(grid.size, dtype=np.int8))
    stepped = fpk_step(dens, pg, 0.15, 0.01, P)
    direct = fpk_step(dens, np.ones(grid.size), 0.15, 0.01, P)
    assert np.array_equal(stepped.p, direct.p)


def test_conditional_mean_tracks_filter():
    g = TriGrid(64)
    dens = gaussian_bump(g, center=(0.98, 0.01), width=0.02)
    dt = fpk_cfl_dt(g, P)
    horizon = 60.0
    traj = run_fpk(dens, np.ones(g.size), 0.15, dt, horizon, P)
    s0, a0 = dens.mean_belief()
    ftraj = integrate_filter(Belief.from_sa(s0, a0), control=1.0, beta=0.15,
                             dt=0.01, horizon=horizon, params=P)
    fs = np.interp(traj.t, ftraj.t, ftraj.s)
    fa = np.interp(traj.t, ftraj.t, ftraj.a)
    tol = max(2 * g.h, 0.02)
    assert np.max(np.abs(traj.mean_s - fs)) < tol
    assert np.max(np.abs(traj.mean_a - fa)) < tol


def test_boundary_flow_never_leaves_the_triangle(grid):
    # the drift is tangent or inward on every boundary segment for any policy
    # and activity level, so the no-flux staircase loses no mass
    for u_val in (0.0, 1.0):
        for b in (0.0, 0.5, 1.0):
            fs, fa = drift_field(grid, np.full(grid.size, u_val), b, P)
            assert np.max((fs + fa)[grid.hyp_mask]) <= 1e-15   # outward diagonal
            assert np.min(fa[grid.a0_mask]) >= 0.0             # downward at a=0
            assert np.max(np.abs(fs[grid.s0_mask])) == 0.0     # sideways at s=0


def test_recovered_ledgers_sum(grid):
    dens = gaussian_bump(grid)
    dt = fpk_cfl_dt(grid, P)
    traj = run_fpk(dens, np.ones(grid.size), 0.15, dt, 200.0, P, record_every=200)
    final = traj.final
    assert final.rho_r_total == pytest.approx(final.rho_r_internal + final.rho_r_post)
    # after a long active run most mass has left the susceptible corner
    assert final.rho_r_total + final.rho_d + final.rho_i > 0.5
