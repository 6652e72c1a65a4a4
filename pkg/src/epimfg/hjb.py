"""Belief-space HJB solver on the triangle, by the method of lines.

The value phi_t(s, a) of a not-yet-symptomatic agent satisfies a backward
transport-reaction PDE with a bang-bang activity choice.  Space is discretized
on :class:`~epimfg.trigrid.TriGrid` with first-order upwind differences chosen
per node from the sign of the local drift; time is integrated backward
explicitly from a terminal condition far in the future until the solution is
stationary.

Two boundary devices keep the problem on the lower half of the triangle:
the s = 0 column is overwritten with its two-state closed form each step, and
nodes above the line a = (1 - s)/2 are reconstructed from their reflection
partner, which differs from the solved node by an affine function of (s, a).
A diagnostic ``mode="full"`` evolves every node instead, so that both boundary
identities can be measured as emergent residuals.

On the hypotenuse the axis-aligned forward stencils leave the triangle; there
the advection is split into a component along the edge (handled with the
diagonal neighbor) and an inward component, keeping every stencil monotone.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from epimfg.params import ModelParams, phi_bar_a, phi_bar_i
from epimfg.trigrid import OUTSIDE, TriGrid

MIN_GRID_N = 32
DEFAULT_CFL = 0.8
STATIONARY_EPS = 1e-8
STATIONARY_RUN = 50


@dataclass(frozen=True)
class ValueGrid:
    t: float
    phi: np.ndarray


@dataclass(frozen=True)
class PolicyGrid:
    t: float
    u: np.ndarray  # int8, values in {0, 1}


@dataclass
class HJBSolution:
    grid: TriGrid
    phi: np.ndarray            # value at the stopping time of the sweep
    policy: np.ndarray         # int8 activity indicator on the full triangle
    t_stop: float              # real time reached by the backward sweep
    converged: bool            # stationarity reached before t = 0
    residual: float            # last sup |dphi/dt| estimate
    steps: int
    dt: float
    snapshots: list[tuple[ValueGrid, PolicyGrid]] = field(default_factory=list)


# -- stencil machinery --------------------------------------------------------


def _advection_stencil(grid: TriGrid, cs: np.ndarray, ca: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Upwind stencil for cs*dphi/ds + ca*dphi/da as (indices, weights, self-weight).

    Generic nodes upwind each axis separately.  Hypotenuse nodes (no outward
    neighbors) split the drift into an along-edge part on a diagonal neighbor
    and an inward part, preserving positive off-diagonal weights.
    """
    h = grid.h
    size = grid.size
    hyp = grid.hyp_mask
    idx = np.zeros((3, size), dtype=np.int64)
    w = np.zeros((3, size))
    w_self = np.zeros(size)

    def put(slot, mask, nbr, weight):
        ok = mask & (nbr != OUTSIDE)
        idx[slot, ok] = nbr[ok]
        w[slot, ok] = weight[ok]
        w_self[ok] -= weight[ok]

    generic = ~hyp
    # s-axis
    put(0, generic & (cs > 0), grid.ip, cs / h)
    put(0, generic & (cs < 0), grid.im, -cs / h)
    # a-axis
    put(1, generic & (ca > 0), grid.jp, ca / h)
    put(1, generic & (ca < 0), grid.jm, -ca / h)

    # hypotenuse: cs + ca <= 0 there (flow is tangent or inward)
    hypA = hyp & (ca > 0)                    # along-edge toward larger a
    put(2, hypA, grid.diag, ca / h)
    put(0, hypA & (cs + ca < 0), grid.im, -(cs + ca) / h)
    hypB = hyp & (ca <= 0) & (cs > 0)        # along-edge toward larger s
    put(2, hypB, grid.adiag, cs / h)
    put(1, hypB & (cs + ca < 0), grid.jm, -(cs + ca) / h)
    hypC = hyp & (ca <= 0) & (cs <= 0)       # plain backward differences
    put(0, hypC & (cs < 0), grid.im, -cs / h)
    put(1, hypC & (ca < 0), grid.jm, -ca / h)
    return idx, w, w_self


def _pair_stencil(grid: TriGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Upwind stencil for (dphi/da - dphi/ds), whose coefficient is >= 0.

    Forward in a, backward in s; on the hypotenuse the two collapse onto the
    diagonal neighbor, which lies along the edge.  At s = 0 the coefficient
    vanishes so missing backward neighbors are irrelevant.
    """
    h = grid.h
    size = grid.size
    idx = np.zeros((2, size), dtype=np.int64)
    w = np.zeros((2, size))
    w_self = np.zeros(size)
    hyp = grid.hyp_mask
    ones = np.full(size, 1.0 / h)

    def put(slot, mask, nbr, weight):
        ok = mask & (nbr != OUTSIDE)
        idx[slot, ok] = nbr[ok]
        w[slot, ok] = weight[ok]
        w_self[ok] -= weight[ok]

    put(0, ~hyp, grid.jp, ones)   # + dphi/da, forward
    put(1, ~hyp, grid.im, ones)   # - dphi/ds, backward: +(phi[im] - phi)/h... sign below
    # backward s difference enters with positive weight on the im neighbor:
    # -(phi - phi[im])/h = (phi[im] - phi)/h
    put(0, hyp, grid.diag, ones)
    return idx, w, w_self


def _apply(idx: np.ndarray, w: np.ndarray, w_self: np.ndarray, phi: np.ndarray,
           rows=None) -> np.ndarray:
    if rows is None:
        out = w_self * phi
        for k in range(idx.shape[0]):
            out += w[k] * phi[idx[k]]
        return out
    out = w_self[rows] * phi[rows]
    for k in range(idx.shape[0]):
        out += w[k, rows] * phi[idx[k, rows]]
    return out


class HJBOperators:
    """Precomputed upwind stencils and coefficient fields for one (grid, params)."""

    def __init__(self, grid: TriGrid, params: ModelParams):
        self.grid = grid
        self.params = params
        self.phi_i = phi_bar_i(params)
        self.phi_a = phi_bar_a(params)
        s, a = grid.s, grid.a
        lai, lar, eta = params.lambda_ai, params.lambda_ar, params.eta
        self.cs = (a * lai - eta) * s
        self.ca = eta * s + a * (a * lai - lai - lar)
        self.adv = _advection_stencil(grid, self.cs, self.ca)
        self.pair = _pair_stencil(grid)
        # zeroth-order pieces of L
        self.l_const = (1.0 - s - a) * params.gamma * params.phi_r + a * lai * self.phi_i
        self.l_decay = a * lai
        self.m_cost = a - (s + a) * params.alpha

    def L(self, phi: np.ndarray, rows=None) -> np.ndarray:
        adv = _apply(*self.adv, phi, rows)
        if rows is None:
            return self.l_const - self.l_decay * phi + adv
        return self.l_const[rows] - self.l_decay[rows] * phi[rows] + adv

    def M(self, phi: np.ndarray, beta_t: float, rows=None) -> np.ndarray:
        pair = _apply(*self.pair, phi, rows)
        s = self.grid.s if rows is None else self.grid.s[rows]
        cost = self.m_cost if rows is None else self.m_cost[rows]
        return cost + self.params.lambda_sa * beta_t * s * pair

    def max_drift(self, beta_max: float) -> float:
        push = self.params.lambda_sa * beta_max * self.grid.s
        d0 = np.abs(self.cs) + np.abs(self.ca)
        d1 = np.abs(self.cs - push) + np.abs(self.ca + push)
        return float(np.maximum(d0, d1).max())


def operator_L(phi: np.ndarray, grid: TriGrid, params: ModelParams) -> np.ndarray:
    """Drift-and-reaction part of the backward generator, on the whole triangle."""
    return HJBOperators(grid, params).L(phi)


def operator_M(phi: np.ndarray, grid: TriGrid, beta_t: float, params: ModelParams) -> np.ndarray:
    """Activity margin; the optimal control is the indicator of M < 0."""
    return HJBOperators(grid, params).M(phi, beta_t)


def terminal_condition(grid: TriGrid, params: ModelParams) -> np.ndarray:
    """Far-horizon terminal value: affine in a below the fold line, reflected above."""
    pa, pr = phi_bar_a(params), params.phi_r
    s, a = grid.s, grid.a
    low = a * pa + (1.0 - a) * pr
    a_ref = 1.0 - s - a
    high = a_ref * pa + (1.0 - a_ref) * pr + (2 * a + s - 1.0) * (pa - pr)
    return np.where(a <= (1.0 - s) / 2.0 + 1e-15, low, high)


def cfl_dt(grid: TriGrid, params: ModelParams, beta_max: float = 1.0,
           cfl: float = DEFAULT_CFL) -> float:
    """Stable explicit step: cfl * h over the largest drift plus reaction terms."""
    ops = HJBOperators(grid, params)
    drift = ops.max_drift(beta_max)
    react = grid.h * (params.gamma + params.lambda_ai)
    return cfl * grid.h / (drift + react)


def _beta_fn(beta):
    """Normalize beta input to (callable, majorant, is_constant)."""
    if hasattr(beta, "interp"):
        samples = np.asarray(beta.beta, dtype=float)
        return beta.interp, float(samples.max()), bool(np.ptp(samples) == 0.0)
    if callable(beta):
        return beta, 1.0, False
    val = float(beta)
    return (lambda t: val), val, True


def solve_hjb(beta, grid: TriGrid, params: ModelParams, dt: float | None = None,
              t_end: float = 2000.0, mode: str = "reflect",
              save_times=None, stationary_eps: float = STATIONARY_EPS,
              stationary_run: int = STATIONARY_RUN,
              min_n: int = MIN_GRID_N) -> HJBSolution:
    """Backward sweep of the belief-space HJB from ``t_end`` toward 0.

    ``beta`` is a constant, a callable of time, or an object with ``interp``.
    In ``reflect`` mode the s = 0 column and the upper half are enforced from
    their boundary identities each step; ``full`` mode evolves every node
    (diagnostic).  With a constant beta the sweep stops once stationary.

    Raises on grids finer than the CFL bound allows or coarser than
    ``min_n`` nodes per side.
    """
    if grid.n < min_n:
        raise ValueError(f"grid resolution n={grid.n} below required minimum {min_n}")
    if mode not in ("reflect", "full"):
        raise ValueError(f"unknown mode {mode!r}")
    beta_of, beta_max, const_beta = _beta_fn(beta)
    ops = HJBOperators(grid, params)
    max_drift = ops.max_drift(beta_max)
    if dt is None:
        react = grid.h * (params.gamma + params.lambda_ai)
        dt = DEFAULT_CFL * grid.h / (max_drift + react)
    elif dt > grid.h / max(max_drift, 1e-300):
        raise ValueError(f"dt={dt:.3g} violates the CFL bound h/max_drift="
                         f"{grid.h / max_drift:.3g}")

    pa, pr = ops.phi_a, params.phi_r
    shift = (2 * grid.a + grid.s - 1.0) * (pa - pr)  # affine offset across the fold
    bc_s0 = grid.a * pa + (1.0 - grid.a) * pr
    s0 = grid.s0_mask
    upper = ~grid.lower_mask
    if mode == "reflect":
        rows = np.flatnonzero(grid.lower_mask & ~s0)
    else:
        rows = np.flatnonzero(np.ones(grid.size, dtype=bool))

    gamma = params.gamma
    lsa_s = params.lambda_sa * grid.s[rows]
    m_cost = ops.m_cost[rows]
    l_const = ops.l_const[rows]
    l_decay = ops.l_decay[rows]
    adv_idx, adv_w, adv_self = ops.adv
    adv_idx, adv_w, adv_self = adv_idx[:, rows], adv_w[:, rows], adv_self[rows]
    pr_idx, pr_w, pr_self = ops.pair
    pr_idx, pr_w, pr_self = pr_idx[:, rows], pr_w[:, rows], pr_self[rows]

    phi = terminal_condition(grid, params)
    n_steps = int(np.ceil(t_end / dt))
    save_list = [] if save_times is None else sorted(float(ts) for ts in save_times)
    next_save = save_list.pop() if save_list else None  # largest first (backward sweep)

    snapshots: list[tuple[ValueGrid, PolicyGrid]] = []
    streak = 0
    converged = False
    residual = np.inf
    t = t_end
    step = 0
    while step < n_steps:
        b = float(beta_of(t))
        phi_rows = phi[rows]
        pair = pr_self * phi_rows
        for k in range(pr_idx.shape[0]):
            pair += pr_w[k] * phi[pr_idx[k]]
        m = m_cost + lsa_s * b * pair
        adv = adv_self * phi_rows
        for k in range(adv_idx.shape[0]):
            adv += adv_w[k] * phi[adv_idx[k]]
        rhs = -gamma * phi_rows + l_const - l_decay * phi_rows + adv + np.minimum(m, 0.0)
        new = phi.copy()
        new[rows] = phi_rows + dt * rhs
        if mode == "reflect":
            new[s0] = bc_s0[s0]
            new[upper] = new[grid.reflect[upper]] + shift[upper]
        inc = float(np.max(np.abs(new[rows] - phi_rows)))
        phi = new
        t -= dt
        step += 1
        residual = inc / dt
        if next_save is not None and t <= next_save:
            pol = (ops.M(phi, b) < 0.0).astype(np.int8)
            snapshots.append((ValueGrid(t, phi.copy()), PolicyGrid(t, pol)))
            next_save = save_list.pop() if save_list else None
        if const_beta:
            streak = streak + 1 if inc < stationary_eps else 0
            if streak >= stationary_run:
                converged = True
                break

    b_final = float(beta_of(max(t, 0.0)))
    policy = (ops.M(phi, b_final) < 0.0).astype(np.int8)
    snapshots.reverse()  # ascending in time
    return HJBSolution(grid=grid, phi=phi, policy=policy, t_stop=max(t, 0.0),
                       converged=converged, residual=residual, steps=step, dt=dt,
                       snapshots=snapshots)


# -- policy post-processing ----------------------------------------------------


@dataclass(frozen=True)
class ThresholdCurve:
    """Per-column switching levels of a bang-bang policy plus the edge summary."""

    s: np.ndarray
    a_thresh: np.ndarray
    column_clean: np.ndarray
    edge_a_thresh: float
    edge_switches: int
    islands_removed: int

    @property
    def clean(self) -> bool:
        return bool(self.column_clean.all()) and self.edge_switches <= 1


def remove_islands(u: np.ndarray, grid: TriGrid, min_frac: float = 0.005) -> tuple[np.ndarray, int]:
    """Flip connected policy regions smaller than ``min_frac`` of the triangle."""
    inside = grid.to_matrix(np.ones(grid.size), fill=0.0).astype(bool)
    mat = grid.to_matrix(u.astype(float), fill=0.0).astype(np.int8)
    min_nodes = max(1, int(np.ceil(min_frac * grid.size)))
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    removed = 0
    for val in (1, 0):
        labels, count = ndimage.label((mat == val) & inside, structure=structure)
        if count == 0:
            continue
        sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=np.arange(1, count + 1))
        for lbl, sz in enumerate(sizes, start=1):
            if sz < min_nodes:
                mat[labels == lbl] = 1 - val
                removed += int(sz)
    return mat[grid.i, grid.j].astype(np.int8), removed


def extract_threshold(policy: np.ndarray, grid: TriGrid,
                      min_island_frac: float = 0.005) -> ThresholdCurve:
    """Switching curve a_thresh(s) of a stationary policy.

    Small connected islands are treated as numerical artifacts and removed
    before scanning.  Columns (and the s + a = 1 edge) with more than one
    switch after removal are flagged, not fatal.
    """
    u, removed = remove_islands(np.asarray(policy, dtype=np.int8), grid, min_island_frac)
    mat = grid.to_matrix(u.astype(float), fill=np.nan)
    n = grid.n
    s_vals = np.arange(n + 1) / n
    a_thresh = np.zeros(n + 1)
    clean = np.ones(n + 1, dtype=bool)
    for i in range(n + 1):
        col = mat[i, : n - i + 1]
        a_thresh[i], clean[i] = _scan_threshold(col, n)
    edge = np.array([mat[n - j, j] for j in range(n + 1)])
    edge_thresh, _ = _scan_threshold(edge, n)
    switches = int(np.count_nonzero(np.diff(edge) != 0))
    return ThresholdCurve(s_vals, a_thresh, clean, edge_thresh, switches, removed)


def _scan_threshold(col: np.ndarray, n: int) -> tuple[float, bool]:
    if np.all(col == 0):
        return 0.0, True
    if np.all(col == 1):
        return 1.0, True
    # smallest a with u = 0 from there on up
    zeros = np.flatnonzero(col == 0)
    j_star = len(col) - 1
    while j_star > 0 and col[j_star - 1] == 0:
        j_star -= 1
    if col[-1] != 0:  # active again above an inactive band
        return float(zeros[0]) / n, False
    thresh = j_star / n
    clean = bool(np.all(col[:j_star] == 1))
    return thresh, clean
