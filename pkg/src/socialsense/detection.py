"""Stopping problems on the two-state belief simplex.

Value iteration runs on a uniform grid over ``pi(2)`` with linear
interpolation between grid points. Decision labels:
for quickest detection 1 = announce change, 2 = continue; for the privacy
problem 1 = reveal observation, 2 = herd. Ties go to the stopping branch
(announce / herd).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from socialsense.belief import (
    ModelParams,
    belief2,
    hmm_filter,
    obs_actions,
    predict,
    social_filter_all,
)
from socialsense.errors import InvalidDiscount, InvalidModel, NotAbsorbing, UnsupportedDimension

STOP, CONTINUE = 1, 2
REVEAL, HERD = 1, 2


@dataclass(frozen=True)
class DetectionCosts:
    delay: float
    false_alarm: float

    def __post_init__(self):
        if self.delay < 0 or self.false_alarm < 0:
            raise ValueError("penalties must be nonnegative")
        if self.delay == 0 and self.false_alarm == 0:
            raise ValueError("at least one penalty must be positive")


@dataclass
class PolicyGrid:
    grid: np.ndarray
    decision: np.ndarray
    value: np.ndarray
    iterations: int = 0
    residuals: list = field(default_factory=list)
    stop_label: int = STOP
    target_state: Optional[int] = None

    @property
    def size(self) -> int:
        return len(self.grid)

    def lookup(self, p2) -> np.ndarray:
        """Decision at the grid point nearest to ``pi(2) = p2``."""
        idx = np.rint(np.asarray(p2) * (self.size - 1)).astype(int)
        return self.decision[np.clip(idx, 0, self.size - 1)]

    @classmethod
    def from_threshold(cls, grid_size: int, threshold: float) -> "PolicyGrid":
        """Single-threshold rule: announce iff ``pi(2) < threshold``."""
        grid = np.linspace(0.0, 1.0, grid_size)
        decision = np.where(grid < threshold, STOP, CONTINUE)
        return cls(grid, decision, np.zeros(grid_size))


def _uniform_grid(grid_size: int) -> np.ndarray:
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    return np.linspace(0.0, 1.0, grid_size)


def _value_iteration(grid, stop_cost, stage_cost, targets, weights, discount, max_iters, tol, init):
    """Iterate ``V = min(stop, stage + discount * sum_k w_k V(target_k))``.

    ``targets``/``weights`` have shape ``(G, K)``: successor ``pi(2)`` values
    and their probabilities for each grid point.
    """
    if init == "zero":
        V = np.zeros_like(grid)
    elif init == "stop":
        V = stop_cost.copy()
    else:
        raise ValueError(f"unknown initialisation {init!r}")
    residuals = []
    it = 0
    for it in range(1, max_iters + 1):
        cont = stage_cost + discount * (weights * np.interp(targets, grid, V)).sum(axis=1)
        V_new = np.minimum(stop_cost, cont)
        residuals.append(float(np.max(np.abs(V_new - V))))
        V = V_new
        if residuals[-1] < tol:
            break
    cont = stage_cost + discount * (weights * np.interp(targets, grid, V)).sum(axis=1)
    decision = np.where(stop_cost <= cont, 1, 2)
    return V, decision, it, residuals


def _check_qd_model(params: ModelParams):
    if params.n_states != 2:
        raise UnsupportedDimension("quickest detection is implemented for two states")
    if not np.array_equal(params.transition[0], [1.0, 0.0]):
        raise NotAbsorbing("state 1 must be absorbing: transition row 1 must be (1, 0)")


def solve_classical_qd(
    params: ModelParams,
    costs: DetectionCosts,
    grid_size: int = 1000,
    max_iters: int = 200,
    tol: float = 1e-9,
    init: str = "zero",
) -> PolicyGrid:
    """Shiryaev quickest detection driven by the ordinary HMM filter."""
    _check_qd_model(params)
    if np.any(params.obs_likelihood <= 0):
        raise InvalidModel("classical quickest detection needs a strictly positive observation matrix")
    grid = _uniform_grid(grid_size)
    beliefs = np.stack([belief2(g) for g in grid])
    pred = predict(beliefs, params)
    Y = params.n_obs
    targets = np.empty((grid_size, Y))
    weights = np.empty((grid_size, Y))
    for y in range(Y):
        weights[:, y] = (params.obs_likelihood[:, y] * pred).sum(axis=1)
        targets[:, y] = hmm_filter(beliefs, y, params)[:, 1]
    stop = costs.false_alarm * grid
    stage = costs.delay * (1.0 - grid)
    V, dec, it, res = _value_iteration(grid, stop, stage, targets, weights, 1.0, max_iters, tol, init)
    return PolicyGrid(grid, dec, V, it, res, STOP)


def solve_social_qd(
    params: ModelParams,
    costs: DetectionCosts,
    grid_size: int = 1000,
    max_iters: int = 200,
    tol: float = 1e-9,
    init: str = "zero",
) -> PolicyGrid:
    """Quickest detection where the decision maker only sees agents' actions."""
    _check_qd_model(params)
    grid = _uniform_grid(grid_size)
    beliefs = np.stack([belief2(g) for g in grid])
    post, sigma = social_filter_all(beliefs, params)
    stop = costs.false_alarm * grid
    stage = costs.delay * (1.0 - grid)
    V, dec, it, res = _value_iteration(grid, stop, stage, post[:, :, 1], sigma, 1.0, max_iters, tol, init)
    return PolicyGrid(grid, dec, V, it, res, STOP)


def count_policy_switches(policy: PolicyGrid, frm: Optional[int] = None, to: Optional[int] = None) -> int:
    """Number of adjacent grid pairs whose decisions differ.

    With ``frm``/``to`` only transitions ``frm -> to`` (scanning left to
    right) are counted.
    """
    d = np.asarray(policy.decision)
    a, b = d[:-1], d[1:]
    mask = a != b
    if frm is not None:
        mask &= a == frm
    if to is not None:
        mask &= b == to
    return int(mask.sum())


def switch_points(policy: PolicyGrid) -> list[tuple[float, int, int]]:
    """``(midpoint, from, to)`` for every switch; each is uncertain by one cell."""
    d = policy.decision
    g = policy.grid
    return [(float((g[i] + g[i + 1]) / 2), int(d[i]), int(d[i + 1])) for i in np.flatnonzero(d[:-1] != d[1:])]


def max_adjacent_jump(policy: PolicyGrid) -> float:
    return float(np.max(np.abs(np.diff(policy.value))))


def decision_intervals(policy: PolicyGrid, label: int) -> list[tuple[float, float]]:
    """Maximal runs of grid points carrying ``label``, as ``(lo, hi)`` pairs."""
    hits = policy.decision == label
    out = []
    g = 0
    while g < policy.size:
        if hits[g]:
            start = g
            while g + 1 < policy.size and hits[g + 1]:
                g += 1
            out.append((float(policy.grid[start]), float(policy.grid[g])))
        g += 1
    return out


@dataclass(frozen=True)
class DetectionStats:
    mean_cost: float
    mean_delay: float
    false_alarm_rate: float
    runs: int
    truncated: int
    cost_stderr: float


def _inverse_cdf(cdf_rows, u):
    # cdf_rows: (N, K) cumulative rows, u: (N,)
    idx = (u[:, None] >= cdf_rows).sum(axis=1)
    return np.minimum(idx, cdf_rows.shape[1] - 1)


def simulate_detection(
    policy: PolicyGrid,
    params: ModelParams,
    costs: DetectionCosts,
    seed: int,
    runs: int,
    horizon: int = 1000,
) -> DetectionStats:
    """Monte Carlo cost of a stopping policy driven by the public belief.

    All runs advance in lockstep from ``numpy.random.default_rng(seed)``:
    one uniform per run for ``x_0``, then per step one uniform per run for
    the state transition followed by one per run for the observation.
    The decision at ``pi_k`` is read from the nearest grid point; ``k = 0``
    uses the prior, so ``tau = 0`` is possible. Runs still going at
    ``horizon`` are censored there: charged delay only.
    """
    _check_qd_model(params)
    rng = np.random.default_rng(seed)
    P_cdf = np.cumsum(params.transition, axis=1)
    B_cdf = np.cumsum(params.obs_likelihood, axis=1)
    x = _inverse_cdf(np.broadcast_to(np.cumsum(params.prior), (runs, params.n_states)), rng.random(runs))
    change_time = np.where(x == 0, 0, np.iinfo(np.int64).max)
    public = np.broadcast_to(np.asarray(params.prior, dtype=float), (runs, params.n_states)).copy()
    stop_time = np.full(runs, -1)
    active = policy.lookup(public[:, 1]) != STOP
    stop_time[~active] = 0
    for k in range(1, horizon + 1):
        if not active.any():
            break
        ux, uy = rng.random(runs), rng.random(runs)
        x = _inverse_cdf(P_cdf[x], ux)
        change_time = np.where((x == 0) & (change_time > k), k, change_time)
        y = _inverse_cdf(B_cdf[x], uy)
        idx = np.flatnonzero(active)
        acts = obs_actions(public[idx], params)[np.arange(len(idx)), y[idx]]
        post, _ = social_filter_all(public[idx], params)
        public[idx] = post[np.arange(len(idx)), acts]
        now_stop = policy.lookup(public[idx, 1]) == STOP
        stop_time[idx[now_stop]] = k
        active[idx[now_stop]] = False
    truncated = int(active.sum())
    stop_time[active] = horizon
    delay = np.maximum(stop_time - np.minimum(change_time, horizon), 0)
    false_alarm = (stop_time < change_time) & ~active
    cost = costs.delay * delay + costs.false_alarm * false_alarm
    return DetectionStats(
        float(cost.mean()),
        float(delay.mean()),
        float(false_alarm.mean()),
        runs,
        truncated,
        float(cost.std(ddof=1) / np.sqrt(runs)) if runs > 1 else 0.0,
    )


def expected_censored_delay(params: ModelParams, horizon: int) -> float:
    """``E (H - tau0)^+`` for the geometric change time of an absorbing chain."""
    p_stay = params.transition[1, 1]
    pi0 = params.prior
    total = horizon * pi0[0]
    for t in range(1, horizon + 1):
        total += (horizon - t) * pi0[1] * p_stay ** (t - 1) * (1 - p_stay)
    return float(total)


def solve_privacy_stopping(
    params: ModelParams,
    discount: float,
    target_state: int = 0,
    grid_size: int = 1000,
    max_iters: int = 1000,
    tol: float = 1e-9,
    herd_costs=None,
    init: str = "zero",
) -> PolicyGrid:
    """Two-level privacy problem: each agent either reveals ``y`` or herds.

    Revealing agent pays ``c(x, y)`` (``params.costs`` has one column per
    observation) and the public belief follows the HMM filter. Herding is
    absorbing: the herd action minimises ``herd_costs' pi`` and the belief
    freezes, so herding from ``pi`` costs ``min_a c_a' pi / (1 - discount)``.
    """
    if not 0 <= discount < 1:
        raise InvalidDiscount(f"discount must lie in [0, 1), got {discount}")
    if params.n_states != 2:
        raise UnsupportedDimension("privacy stopping is implemented for two states")
    if not params.is_identity:
        raise InvalidModel("privacy stopping assumes a static state (identity transition)")
    if params.costs.shape[1] != params.n_obs:
        raise InvalidModel("reveal costs need one column per observation symbol")
    herd_costs = params.costs if herd_costs is None else np.asarray(herd_costs, dtype=float)
    if herd_costs.ndim != 2 or herd_costs.shape[0] != params.n_states:
        raise InvalidModel("herd costs must have one row per state")
    grid = _uniform_grid(grid_size)
    beliefs = np.stack([belief2(g) for g in grid])
    Y = params.n_obs
    targets = np.empty((grid_size, Y))
    weights = np.empty((grid_size, Y))
    reveal_stage = np.zeros(grid_size)
    for y in range(Y):
        joint = params.obs_likelihood[:, y] * beliefs  # P(x=i, y)
        weights[:, y] = joint.sum(axis=1)
        ok = weights[:, y] > 0
        targets[:, y] = np.where(ok, joint[:, 1] / np.where(ok, weights[:, y], 1.0), grid)
        reveal_stage += (joint * params.costs[:, y]).sum(axis=1)
    herd_value = (beliefs @ herd_costs).min(axis=1) / (1.0 - discount)
    V, dec, it, res = _value_iteration(grid, herd_value, reveal_stage, targets, weights, discount, max_iters, tol, init)
    # _value_iteration labels the stopping branch 1; herding is the stopping branch here
    decision = np.where(dec == 1, HERD, REVEAL)
    return PolicyGrid(grid, decision, V, it, res, HERD, target_state)


@dataclass(frozen=True)
class PrivacyRollout:
    decisions: np.ndarray  # (runs, horizon)
    herd_time: np.ndarray  # first herd step per run, -1 if never
    revealed_after_herd: bool


def simulate_privacy(policy: PolicyGrid, params: ModelParams, seed: int, runs: int, horizon: int) -> PrivacyRollout:
    """Roll the privacy policy forward; herding agents ignore their observation.

    Draws: one uniform per run for the state, then per step one per run for
    the observation (drawn even when unused so streams stay aligned).
    """
    rng = np.random.default_rng(seed)
    x = _inverse_cdf(np.broadcast_to(np.cumsum(params.prior), (runs, params.n_states)), rng.random(runs))
    B_cdf = np.cumsum(params.obs_likelihood, axis=1)
    public = np.broadcast_to(np.asarray(params.prior, dtype=float), (runs, params.n_states)).copy()
    decisions = np.empty((runs, horizon), dtype=int)
    for k in range(horizon):
        dec = policy.lookup(public[:, 1])
        decisions[:, k] = dec
        y = _inverse_cdf(B_cdf[x], rng.random(runs))
        for r in np.flatnonzero(dec == REVEAL):
            public[r] = hmm_filter(public[r], int(y[r]), params)
        # herding reveals nothing and the state is static: belief unchanged
    herded = decisions == HERD
    herd_time = np.where(herded.any(axis=1), herded.argmax(axis=1), -1)
    after = np.zeros(runs, dtype=bool)
    for r in np.flatnonzero(herd_time >= 0):
        after[r] = np.any(decisions[r, herd_time[r]:] == REVEAL)
    return PrivacyRollout(decisions, herd_time, bool(after.any()))
