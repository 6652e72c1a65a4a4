"""Exact-event Monte Carlo of the five-state agent process.

Serves as the independent oracle for the closed forms, the belief filter, the
density transport, and the realized objective.  Jump times are sampled
exactly: constant-rate transitions as competing exponentials, the time-varying
susceptible-to-asymptomatic hazard by thinning against a constant majorant.
Every agent owns a counter-derived random stream, so ensembles replay
bit-identically for a given seed regardless of chunking.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from epimfg.belief import Belief, integrate_filter
from epimfg.params import EpiState, ModelParams

INF = float("inf")


# -- activity schedules and policies ------------------------------------------


@dataclass(frozen=True)
class StepSchedule:
    """Right-continuous piecewise-constant activity u(t)."""

    times: tuple[float, ...] = (0.0,)
    values: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        if len(self.times) != len(self.values) or not self.times or self.times[0] != 0.0:
            raise ValueError("schedule needs matching times/values starting at t=0")

    @classmethod
    def constant(cls, u: float) -> "StepSchedule":
        return cls((0.0,), (float(u),))

    @classmethod
    def from_samples(cls, t: np.ndarray, u: np.ndarray) -> "StepSchedule":
        """Compress a sampled control path to its switch points."""
        keep = np.flatnonzero(np.diff(u) != 0) + 1
        times = (0.0, *np.asarray(t)[keep])
        values = (float(u[0]), *np.asarray(u)[keep])
        return cls(times, values)

    def at(self, t: float) -> float:
        return self.values[bisect_right(self.times, t) - 1]

    @property
    def max_value(self) -> float:
        return max(self.values)

    def segments(self, t0: float, t1: float):
        """Yield (a, b, u) pieces covering [t0, t1]."""
        k = bisect_right(self.times, t0) - 1
        a = t0
        while a < t1:
            b = self.times[k + 1] if k + 1 < len(self.times) else INF
            yield a, min(b, t1), self.values[k]
            a = b
            k += 1


@dataclass(frozen=True)
class AgentPolicy:
    """Activity schedules per information state.

    Fully observed agents may distinguish S from A; a partially observed agent
    cannot, so its pre-symptom schedule is shared (build one via
    ``belief_feedback_policy``).  Activity after symptom onset defaults to
    isolation, which is optimal whenever the reward stays below the altruistic
    cost.
    """

    u_susceptible: StepSchedule
    u_asymptomatic: StepSchedule = StepSchedule.constant(0.0)
    u_symptomatic: StepSchedule = StepSchedule.constant(0.0)

    def in_state(self, x: EpiState) -> StepSchedule:
        if x is EpiState.S:
            return self.u_susceptible
        if x is EpiState.A:
            return self.u_asymptomatic
        if x is EpiState.I:
            return self.u_symptomatic
        raise ValueError(f"no activity schedule in absorbing state {x}")


def full_info_policy(u_s, u_a=0.0, u_i=0.0) -> AgentPolicy:
    def as_schedule(u):
        return u if isinstance(u, StepSchedule) else StepSchedule.constant(u)
    return AgentPolicy(as_schedule(u_s), as_schedule(u_a), as_schedule(u_i))


def belief_feedback_policy(decision: Callable[[Belief], float], beta, params: ModelParams,
                           b0: Belief = Belief(1.0, 0.0, 0.0), dt: float = 0.01,
                           horizon: float = 2000.0) -> tuple[AgentPolicy, "np.ndarray"]:
    """Close the loop between the belief filter and a belief-decision rule.

    Pre-symptom beliefs are deterministic, so the control path is computed once
    and shared: the same schedule applies in S and A (the agent cannot tell).
    Returns the policy and the belief path used to build it.
    """
    traj = integrate_filter(b0, control=lambda t, b: decision(b), beta=beta,
                            dt=dt, horizon=horizon, params=params)
    sched = StepSchedule.from_samples(traj.t, traj.u)
    beliefs = np.column_stack([traj.s, traj.a, traj.r])
    return AgentPolicy(sched, sched), beliefs


def threshold_decision(a_thresh: float) -> Callable[[Belief], float]:
    """Stay active while the asymptomatic belief is below the threshold."""
    return lambda b: 1.0 if b.a < a_thresh else 0.0


# -- single-agent simulation ----------------------------------------------------


@dataclass(frozen=True)
class AgentRecord:
    theta: str
    times: tuple[float, ...]          # jump times, starting at 0.0
    states: tuple[EpiState, ...]      # state entered at each jump time
    tau: float                        # symptom onset (inf if never)
    t_stop: float                     # first hit of {R, D} (inf if censored)
    cost: float                       # realized discounted objective sample
    censored: bool
    tail_bound: float

    def state_at(self, t) -> np.ndarray:
        """State codes (0..4 in S,A,I,R,D order) at times t (vectorized)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.searchsorted(self.times, t, side="right") - 1
        codes = np.array([_STATE_CODE[s] for s in self.states])
        return codes[np.clip(idx, 0, len(codes) - 1)]


_STATE_CODE = {EpiState.S: 0, EpiState.A: 1, EpiState.I: 2, EpiState.R: 3, EpiState.D: 4}
STATE_BY_CODE = (EpiState.S, EpiState.A, EpiState.I, EpiState.R, EpiState.D)


def _discount_integral(gamma: float, a: float, b: float) -> float:
    if gamma == 0.0:
        return b - a
    return (math.exp(-gamma * a) - math.exp(-gamma * b)) / gamma


def _segment_cost(base: float, slope: float, sched: StepSchedule, t0: float, t1: float,
                  gamma: float) -> float:
    total = base * _discount_integral(gamma, t0, t1)
    for a, b, u in sched.segments(t0, t1):
        total += slope * u * _discount_integral(gamma, a, b)
    return total


def agent_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def simulate_agent(policy: AgentPolicy, beta, params: ModelParams,
                   rng: np.random.Generator, x0: EpiState = EpiState.S,
                   t_max: float = 2000.0, beta_max: float | None = None,
                   theta: str = "base") -> AgentRecord:
    """One exact path of the jump process under the given policy.

    ``beta`` is a constant or callable of time; ``beta_max`` must dominate it
    (defaults to the constant itself, or 1 for callables).  ``rng`` is required:
    there is no ambient randomness.
    """
    if callable(beta):
        beta_of = beta
        bmax = 1.0 if beta_max is None else beta_max
    else:
        bval = float(beta)
        beta_of = lambda t: bval
        bmax = bval if beta_max is None else beta_max

    gam = params.gamma
    slope = params.c_a - params.alpha        # activity cost slope in A and I
    slope_s = -params.alpha
    times = [0.0]
    states = [x0]
    t = 0.0
    x = x0
    cost = 0.0
    tau = INF
    t_stop = INF
    censored = False

    while True:
        if x is EpiState.R or x is EpiState.D:
            t_stop = t
            cost += math.exp(-gam * t) * (params.phi_r if x is EpiState.R else params.phi_d)
            break
        if x is EpiState.S:
            sched = policy.in_state(EpiState.S)
            majorant = params.eta + params.lambda_sa * bmax * sched.max_value
            t_jump = None
            if majorant > 0:
                tt = t
                while True:
                    tt += rng.exponential(1.0 / majorant)
                    if tt >= t_max:
                        break
                    hazard = params.eta + params.lambda_sa * beta_of(tt) * sched.at(tt)
                    if hazard > majorant * (1.0 + 1e-12):
                        raise RuntimeError("thinning majorant violated; beta_max too small")
                    if rng.uniform() * majorant <= hazard:
                        t_jump = tt
                        break
            if t_jump is None:
                cost += _segment_cost(0.0, slope_s, sched, t, t_max, gam)
                censored = True
                break
            cost += _segment_cost(0.0, slope_s, sched, t, t_jump, gam)
            t, x = t_jump, EpiState.A
        elif x is EpiState.A:
            rate = params.lambda_ai + params.lambda_ar
            hold = rng.exponential(1.0 / rate) if rate > 0 else INF
            t_next = t + hold
            sched = policy.in_state(EpiState.A)
            if t_next >= t_max or rate == 0:
                cost += _segment_cost(params.c_h_a, slope, sched, t, t_max, gam)
                censored = True
                break
            cost += _segment_cost(params.c_h_a, slope, sched, t, t_next, gam)
            if rng.uniform() * rate <= params.lambda_ai:
                x = EpiState.I
                tau = t_next
            else:
                x = EpiState.R
            t = t_next
        elif x is EpiState.I:
            if tau == INF:
                tau = t  # started symptomatic
            rate = params.lambda_ir + params.lambda_id
            hold = rng.exponential(1.0 / rate) if rate > 0 else INF
            t_next = t + hold
            sched = policy.in_state(EpiState.I)
            if t_next >= t_max or rate == 0:
                cost += _segment_cost(params.c_h_i, slope, sched, t, t_max, gam)
                censored = True
                break
            cost += _segment_cost(params.c_h_i, slope, sched, t, t_next, gam)
            x = EpiState.R if rng.uniform() * rate <= params.lambda_ir else EpiState.D
            t = t_next
        times.append(t)
        states.append(x)

    tail = math.exp(-gam * t_max) * (max(abs(params.phi_r), abs(params.phi_d))
                                     + (params.c_h_i + abs(slope)) / gam)
    return AgentRecord(theta, tuple(times), tuple(states), tau, t_stop, cost,
                       censored, tail if censored else 0.0)


# -- ensemble estimators ---------------------------------------------------------


@dataclass(frozen=True)
class ObjectiveEstimate:
    mean: float
    stderr: float
    n: int
    tail_bound: float

    def within(self, target: float, k_sigma: float = 3.0) -> bool:
        return abs(self.mean - target) <= k_sigma * self.stderr + self.tail_bound


def estimate_objective(policy: AgentPolicy, beta, params: ModelParams, n: int,
                       seed: int, x0=EpiState.S, t_max: float = 2000.0,
                       beta_max: float | None = None) -> ObjectiveEstimate:
    """Monte Carlo mean and standard error of the realized objective.

    ``x0`` may be a state or a :class:`Belief`, in which case each agent's true
    initial state is drawn from the belief (the belief-consistent start).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    costs = np.empty(n)
    tail = 0.0
    for k in range(n):
        rng = agent_rng(seed, k)
        if isinstance(x0, Belief):
            draw = rng.uniform()
            x_init = EpiState.S if draw < x0.s else (EpiState.A if draw < x0.s + x0.a
                                                     else EpiState.R)
        else:
            x_init = x0
        rec = simulate_agent(policy, beta, params, rng, x0=x_init, t_max=t_max,
                             beta_max=beta_max)
        costs[k] = rec.cost
        tail = max(tail, rec.tail_bound)
    return ObjectiveEstimate(float(costs.mean()),
                             float(costs.std(ddof=1) / math.sqrt(n)) if n > 1 else INF,
                             n, tail)


@dataclass(frozen=True)
class EnsembleStats:
    t: np.ndarray
    counts: np.ndarray         # (len(t), 5) agent counts in S,A,I,R,D order
    fractions: np.ndarray      # counts / n
    beta_hat: np.ndarray
    halfwidth: np.ndarray      # 95% binomial half-widths per state
    n_agents: int
    seed: int

    def fraction_of(self, x: EpiState) -> np.ndarray:
        return self.fractions[:, _STATE_CODE[x]]


def _sample_theta(params: ModelParams, rng: np.random.Generator) -> str:
    if len(params.attributes) == 1:
        return params.attributes[0].id
    r = rng.uniform()
    acc = 0.0
    for attr in params.attributes:
        acc += attr.prob
        if r < acc:
            return attr.id
    return params.attributes[-1].id


def ensemble_run(policies: AgentPolicy | Mapping[str, AgentPolicy], params: ModelParams,
                 n: int, seed: int, beta=0.0, feedback: str = "open-loop",
                 dt_bin: float = 0.5, t_max: float = 200.0,
                 x0: EpiState = EpiState.S,
                 decision: Callable[[Belief], float] | None = None) -> EnsembleStats:
    """Simulate n agents and bin their states onto a uniform time grid.

    ``open-loop`` drives every agent with the supplied beta; ``closed-loop``
    recomputes the empirical activity-weighted infected fraction each bin and
    feeds it back (the finite-population surrogate of the coupled game).  In
    closed-loop mode a ``decision`` rule on beliefs replaces precomputed
    schedules for the pre-symptom activity.
    """
    if feedback not in ("open-loop", "closed-loop"):
        raise ValueError(f"unknown feedback mode {feedback!r}")
    if isinstance(policies, AgentPolicy):
        policies = {attr.id: policies for attr in params.attributes}
    n_bins = int(round(t_max / dt_bin))
    t_grid = np.linspace(0.0, n_bins * dt_bin, n_bins + 1)

    if feedback == "open-loop":
        counts = np.zeros((n_bins + 1, 5))
        activity = np.zeros(n_bins + 1)
        u_grids = {th: (np.array([pol.u_asymptomatic.at(tv) for tv in t_grid]),
                        np.array([pol.u_symptomatic.at(tv) for tv in t_grid]))
                   for th, pol in policies.items()}
        bins_idx = np.arange(n_bins + 1)
        for k in range(n):
            rng = agent_rng(seed, k)
            theta = _sample_theta(params, rng)
            p_theta = params.for_attribute(theta)
            rec = simulate_agent(policies[theta], beta, p_theta, rng, x0=x0, t_max=t_max)
            codes = rec.state_at(t_grid)
            counts[bins_idx, codes] += 1.0
            u_a_grid, u_i_grid = u_grids[theta]
            activity += np.where(codes == 1, u_a_grid, np.where(codes == 2, u_i_grid, 0.0))
        beta_hat = activity / n
    else:
        counts, beta_hat = _closed_loop(policies, params, n, seed, t_grid,
                                        x0, decision)

    fractions = counts / n
    halfwidth = 1.96 * np.sqrt(fractions * (1.0 - fractions) / n)
    return EnsembleStats(t_grid, counts, fractions, beta_hat, halfwidth, n, seed)


def _closed_loop(policies, params, n, seed, t_grid, x0, decision):
    n_bins = len(t_grid) - 1
    dt = float(t_grid[1] - t_grid[0])
    rngs = [agent_rng(seed, k) for k in range(n)]
    thetas = [_sample_theta(params, rngs[k]) for k in range(n)]
    p_thetas = {a.id: params.for_attribute(a.id) for a in params.attributes}
    states = [x0] * n
    belief = Belief(1.0, 0.0, 0.0) if x0 is EpiState.S else Belief(0.0, 1.0, 0.0)

    counts = np.zeros((n_bins + 1, 5))
    beta_hat = np.zeros(n_bins + 1)

    def record(m, b_now):
        for x in states:
            counts[m, _STATE_CODE[x]] += 1.0
        u_pre = decision(belief) if decision is not None else 0.0
        acting = sum(u_pre if x is EpiState.A else 0.0 for x in states)
        beta_hat[m] = acting / n
        return u_pre

    u_pre = record(0, 0.0)
    for m in range(n_bins):
        b = beta_hat[m]
        for k in range(n):
            x = states[k]
            p = p_thetas[thetas[k]]
            rng = rngs[k]
            t_left = dt
            while t_left > 0 and x not in (EpiState.R, EpiState.D):
                if x is EpiState.S:
                    rate = p.eta + p.lambda_sa * b * u_pre
                    nxt = EpiState.A
                elif x is EpiState.A:
                    rate = p.lambda_ai + p.lambda_ar
                    nxt = None
                else:
                    rate = p.lambda_ir + p.lambda_id
                    nxt = None
                if rate <= 0:
                    break
                w = rng.exponential(1.0 / rate)
                if w >= t_left:
                    break
                t_left -= w
                if x is EpiState.A:
                    x = EpiState.I if rng.uniform() * rate <= p.lambda_ai else EpiState.R
                elif x is EpiState.I:
                    x = EpiState.R if rng.uniform() * rate <= p.lambda_ir else EpiState.D
                else:
                    x = nxt
            states[k] = x
        # advance the shared pre-symptom belief one bin with the realized beta
        traj = integrate_filter(belief, control=u_pre, beta=b, dt=min(0.01, dt),
                                horizon=dt, params=params)
        belief = Belief(float(traj.s[-1]), float(traj.a[-1]), float(traj.r[-1]))
        u_pre = record(m + 1, b)
    return counts, beta_hat


def empirical_rates(records: Sequence[AgentRecord]) -> dict[str, float]:
    """Estimate each transition rate as transitions over time-at-risk."""
    time_at = {EpiState.A: 0.0, EpiState.I: 0.0}
    jumps = {"a_to_i": 0, "a_to_r": 0, "i_to_r": 0, "i_to_d": 0}
    for rec in records:
        for (t0, x0), (t1, x1) in zip(zip(rec.times, rec.states),
                                      zip(rec.times[1:], rec.states[1:])):
            if x0 in time_at:
                time_at[x0] += t1 - t0
            if x0 is EpiState.A:
                jumps["a_to_i" if x1 is EpiState.I else "a_to_r"] += 1
            elif x0 is EpiState.I:
                jumps["i_to_r" if x1 is EpiState.R else "i_to_d"] += 1
    out = {}
    if time_at[EpiState.A] > 0:
        out["lambda_ai"] = jumps["a_to_i"] / time_at[EpiState.A]
        out["lambda_ar"] = jumps["a_to_r"] / time_at[EpiState.A]
    if time_at[EpiState.I] > 0:
        out["lambda_ir"] = jumps["i_to_r"] / time_at[EpiState.I]
        out["lambda_id"] = jumps["i_to_d"] / time_at[EpiState.I]
    return out
