"""Sequential social learning: protocol simulation, herd and cascade detection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from socialsense.belief import (
    ModelParams,
    belief2,
    hmm_filter,
    myopic_action,
    obs_actions,
    social_filter_all,
    social_learning_filter,
)
from socialsense.errors import UnsupportedDimension

FREEZE_TOL = 1e-12


@dataclass(frozen=True)
class Step:
    k: int
    true_state: int
    obs: int
    private_belief: np.ndarray
    action: int
    public_belief: np.ndarray


@dataclass
class LearningTrace:
    """Per-step record of a protocol run; ``public[0]`` is the prior."""

    true_state: np.ndarray
    obs: np.ndarray
    private: np.ndarray
    actions: np.ndarray
    public: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)

    @classmethod
    def from_steps(cls, prior, steps: list[Step]) -> "LearningTrace":
        return cls(
            true_state=np.array([s.true_state for s in steps], dtype=int),
            obs=np.array([s.obs for s in steps], dtype=int),
            private=np.array([s.private_belief for s in steps]),
            actions=np.array([s.action for s in steps], dtype=int),
            public=np.vstack([np.asarray(prior, dtype=float)] + [s.public_belief for s in steps]),
        )


@dataclass(frozen=True)
class HerdReport:
    individual_herd_at: Optional[int] = None
    herd_at: Optional[int] = None
    cascade_at: Optional[int] = None


def _draw(rng: np.random.Generator, pmf) -> int:
    # inverse-CDF with one uniform per draw keeps the stream layout simple
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(pmf), u, side="right"))
    return min(idx, len(pmf) - 1)


def iter_protocol(params: ModelParams, seed: int) -> Iterator[Step]:
    """Endless protocol run.

    Per step ``k``: the state moves ``x_k ~ P(x_{k-1}, .)`` (``x_0 ~ prior``),
    the agent observes ``y_k ~ B(x_k, .)``, forms its private belief from the
    public one, acts myopically, and the public belief is updated by the
    social learning filter. Random draws use ``numpy.random.default_rng(seed)``
    (PCG64) in the order: ``x_0``, then per step ``x_k``, ``y_k``.
    """
    rng = np.random.default_rng(seed)
    x = _draw(rng, params.prior)
    public = np.asarray(params.prior, dtype=float)
    k = 0
    while True:
        k += 1
        x = _draw(rng, params.transition[x])
        y = _draw(rng, params.obs_likelihood[x])
        private = hmm_filter(public, y, params)
        a = y if params.reveal else myopic_action(private, params.costs)
        public, _ = social_learning_filter(public, a, params)
        yield Step(k, x, y, private, a, public)


def run_protocol(params: ModelParams, horizon: int, seed: int) -> LearningTrace:
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    steps = []
    for step in iter_protocol(params, seed):
        steps.append(step)
        if step.k == horizon:
            break
    return LearningTrace.from_steps(params.prior, steps)


def is_individual_herd(public, params: ModelParams) -> bool:
    """True iff the myopic action is the same for every observation."""
    acts = obs_actions(public, params)
    return bool(np.all(acts == acts[0]))


def is_cascade_point(public, params: ModelParams, tol: float = FREEZE_TOL) -> bool:
    """True iff every action with positive probability leaves the public belief unchanged."""
    public = np.asarray(public, dtype=float)
    beliefs, sigma = social_filter_all(public, params)
    moved = np.abs(beliefs - public).max(axis=-1) > tol
    return not bool(np.any(moved & (sigma > 0)))


def analyze_trace(trace: LearningTrace, params: ModelParams) -> HerdReport:
    """Locate the first individual herd, herd of agents and cascade (1-based steps).

    ``herd_at`` is the first ``k`` after which every recorded action equals
    the last one; at least one later action is required, so a single-step
    trace never reports a herd.
    """
    K = len(trace)
    if K == 0:
        raise ValueError("empty trace")
    individual = next((k for k in range(1, K + 1) if is_individual_herd(trace.public[k - 1], params)), None)

    herd = None
    if K >= 2:
        acts = trace.actions
        k = K - 1  # actions a_{k+1..K} in 0-based slice acts[k:]
        while k >= 1 and acts[k - 1] == acts[K - 1]:
            k -= 1
        herd = max(k, 1)

    cascade = next((k for k in range(1, K + 1) if is_cascade_point(trace.public[k], params)), None)
    return HerdReport(individual, herd, cascade)


def time_to_cascade(params: ModelParams, seed: int, max_steps: int) -> Optional[int]:
    """First step ``k <= max_steps`` whose public belief is a cascade point, else None.

    Consumes the same random stream as :func:`run_protocol`, so the answer
    equals ``analyze_trace(run_protocol(params, max_steps, seed)).cascade_at``.
    """
    for step in iter_protocol(params, seed):
        if is_cascade_point(step.public_belief, params):
            return step.k
        if step.k >= max_steps:
            return None
    return None


@dataclass(frozen=True)
class HerdInterval:
    lo: float
    hi: float
    action: int


def herd_region_boundaries(params: ModelParams, grid_size: int = 1001) -> list[HerdInterval]:
    """Maximal runs of a uniform ``pi(2)`` grid on which agents herd.

    Each interval spans grid points ``lo..hi`` (inclusive) and is labelled by
    the constant action. For the classic two-action setting the first
    interval's ``hi`` estimates ``pi_1*`` and the last interval's ``lo``
    estimates ``pi_2*``.
    """
    if params.n_states != 2:
        raise UnsupportedDimension("herd region scan is defined on the 1-simplex only")
    grid = np.linspace(0.0, 1.0, grid_size)
    acts = obs_actions(np.stack([belief2(g) for g in grid]), params)
    herding = np.all(acts == acts[:, :1], axis=1)
    intervals = []
    g = 0
    while g < grid_size:
        if not herding[g]:
            g += 1
            continue
        start, action = g, int(acts[g, 0])
        while g + 1 < grid_size and herding[g + 1] and acts[g + 1, 0] == action:
            g += 1
        intervals.append(HerdInterval(float(grid[start]), float(grid[g]), action))
        g += 1
    return intervals
