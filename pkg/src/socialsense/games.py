"""Regret matching in repeated games and correlated-equilibrium checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from socialsense.errors import InvalidNormalizer, ShapeMismatch


@dataclass(frozen=True)
class GameSpec:
    """``utilities[l][a^1, ..., a^L]`` is player ``l``'s payoff for a joint profile."""

    utilities: tuple

    def __post_init__(self):
        utils = tuple(np.asarray(u, dtype=float) for u in self.utilities)
        if not utils:
            raise ValueError("need at least one player")
        shape = utils[0].shape
        if len(shape) != len(utils):
            raise ShapeMismatch(f"{len(utils)} players need {len(utils)}-dimensional utility tables, got {shape}")
        for l, u in enumerate(utils):
            if u.shape != shape:
                raise ShapeMismatch(f"player {l + 1} utility table has shape {u.shape}, expected {shape}")
            if not np.all(np.isfinite(u)):
                raise ValueError(f"player {l + 1} utilities must be finite")
        if min(shape) < 1:
            raise ValueError("every player needs at least one action")
        object.__setattr__(self, "utilities", utils)

    @property
    def n_players(self) -> int:
        return len(self.utilities)

    @property
    def action_counts(self) -> tuple[int, ...]:
        return self.utilities[0].shape

    @classmethod
    def from_flat(cls, action_counts: Sequence[int], tables: Sequence[Sequence[float]]) -> "GameSpec":
        """Build from row-major flattened utility tables, one per player."""
        shape = tuple(int(a) for a in action_counts)
        size = int(np.prod(shape))
        utils = []
        for l, t in enumerate(tables):
            t = np.asarray(t, dtype=float)
            if t.size != size:
                raise ShapeMismatch(f"player {l + 1} needs {size} utilities, got {t.size}")
            utils.append(t.reshape(shape))
        return cls(tuple(utils))

    def payoffs(self, player: int, profile: Sequence[int]) -> np.ndarray:
        """``U^l(j, a^{-l})`` for every own action ``j`` with the others held at ``profile``."""
        idx = list(profile)
        idx[player] = slice(None)
        return self.utilities[player][tuple(idx)]

    def default_normalizer(self, player: int) -> float:
        spread = float(np.ptp(self.utilities[player]))
        return 2.0 * self.action_counts[player] * spread if spread > 0 else 1.0


@dataclass
class RegretState:
    regrets: np.ndarray
    last_action: int
    normalizer: float

    @classmethod
    def zero(cls, n_actions: int, last_action: int, normalizer: float) -> "RegretState":
        return cls(np.zeros((n_actions, n_actions)), last_action, normalizer)

    @property
    def n_actions(self) -> int:
        return self.regrets.shape[0]


@dataclass
class EmpiricalDistribution:
    counts: np.ndarray
    steps: int

    @property
    def pmf(self) -> np.ndarray:
        return self.counts / self.steps


def action_pmf(state: RegretState) -> np.ndarray:
    """Switch to ``j`` with probability ``r(last, j)^+ / C``; stay with the rest."""
    last = state.last_action
    pos = np.maximum(state.regrets[last], 0.0)
    pos[last] = 0.0
    total = 0.0
    for j in range(state.n_actions):
        if j != last:
            total += pos[j]
    if not state.normalizer > total:
        raise InvalidNormalizer(f"normalizer {state.normalizer} must exceed total positive regret {total}")
    pmf = pos / state.normalizer
    pmf[last] = 1.0 - total / state.normalizer
    return pmf


def regret_update(state: RegretState, own_action: int, payoffs, k: int) -> RegretState:
    """Stochastic-approximation step with step size ``1/k``.

    ``payoffs[j]`` is ``U^l(j, a^{-l}_k)``, the payoff the player would have
    received for each own action against the others' actual play.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    payoffs = np.asarray(payoffs, dtype=float)
    target = np.zeros_like(state.regrets)
    target[own_action] = payoffs - payoffs[own_action]
    regrets = state.regrets + (target - state.regrets) / k
    return RegretState(regrets, own_action, state.normalizer)


def time_averaged_regret(own_actions: Sequence[int], payoff_rows: Sequence, n_actions: int) -> np.ndarray:
    """Direct evaluation of ``r_n(i, j) = (1/n) sum_k [U(j, .) - U(a_k, .)] 1{a_k = i}``."""
    total = np.zeros((n_actions, n_actions))
    for a, row in zip(own_actions, payoff_rows):
        row = np.asarray(row, dtype=float)
        total[a] += row - row[a]
    return total / len(own_actions)


def _sample(pmf, u: float) -> int:
    c = 0.0
    for j, p in enumerate(pmf):
        c += p
        if u < c:
            return j
    return len(pmf) - 1


@numba.njit(cache=True)
def _regret_kernel(k_start, k_stop, uniforms, utils, strides, n_actions, normalizers, regrets, last, counts):
    """Steps ``k_start..k_stop-1`` of simultaneous regret matching (1-based k).

    Mirrors ``action_pmf`` + ``_sample`` + ``regret_update`` exactly,
    including summation order, so traces match the reference path bit for bit.
    """
    L = len(n_actions)
    amax = regrets.shape[1]
    profile = np.empty(L, dtype=np.int64)
    for k in range(k_start, k_stop):
        for l in range(L):
            A = n_actions[l]
            u = uniforms[k - 1, l]
            if k == 1:
                a = int(u * A)
                if a >= A:
                    a = A - 1
            else:
                prev = last[l]
                total = 0.0
                for j in range(A):
                    if j != prev:
                        r = regrets[l, prev, j]
                        if r > 0.0:
                            total += r
                C = normalizers[l]
                c = 0.0
                a = A - 1
                for j in range(A):
                    if j == prev:
                        p = 1.0 - total / C
                    else:
                        r = regrets[l, prev, j]
                        p = (r if r > 0.0 else 0.0) / C
                    c += p
                    if u < c:
                        a = j
                        break
            profile[l] = a
        flat = 0
        for l in range(L):
            flat += profile[l] * strides[l]
        counts[flat] += 1
        for l in range(L):
            A = n_actions[l]
            own = profile[l]
            base = flat - own * strides[l]
            u_own = utils[l, flat]
            for i in range(A):
                for j in range(A):
                    t = 0.0
                    if i == own:
                        t = utils[l, base + j * strides[l]] - u_own
                    regrets[l, i, j] = regrets[l, i, j] + (t - regrets[l, i, j]) / k
            last[l] = own
    for l in range(L):
        for i in range(amax):
            regrets[l, i, i] = 0.0


@dataclass
class Checkpoint:
    step: int
    max_positive_regret: tuple
    ce_violation: float


@dataclass
class GameRun:
    empirical: EmpiricalDistribution
    states: list
    actions: Optional[np.ndarray] = None
    checkpoints: list = field(default_factory=list)


def _draw_uniforms(seed: int, steps: int, players: int) -> np.ndarray:
    # one uniform per player per step, drawn up front from PCG64
    return np.random.default_rng(seed).random((steps, players))


def run_repeated_game(
    game: GameSpec,
    steps: int,
    seed: int,
    normalizers: Optional[Sequence[float]] = None,
    checkpoints: Sequence[int] = (),
    record_actions: bool = False,
    engine: str = "compiled",
) -> GameRun:
    """Simultaneous regret matching for ``steps`` rounds.

    Round 1 actions are uniform; afterwards each player samples from
    :func:`action_pmf` of its own regrets. Uniform ``u[k, l]`` drives player
    ``l`` at round ``k``. ``engine="python"`` runs the reference
    implementation built from :func:`action_pmf` and :func:`regret_update`.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    L = game.n_players
    counts_shape = game.action_counts
    Cs = [float(c) for c in normalizers] if normalizers is not None else [game.default_normalizer(l) for l in range(L)]
    if len(Cs) != L:
        raise ShapeMismatch(f"need {L} normalizers, got {len(Cs)}")
    for l, C in enumerate(Cs):
        if not C > 0:
            raise InvalidNormalizer(f"player {l + 1} normalizer must be positive")
    u = _draw_uniforms(seed, steps, L)
    marks = sorted({int(c) for c in checkpoints if 1 <= c <= steps})
    if engine == "python":
        return _run_reference(game, steps, u, Cs, marks, record_actions)
    if engine != "compiled":
        raise ValueError(f"unknown engine {engine!r}")
    if record_actions:
        return _run_reference(game, steps, u, Cs, marks, record_actions)

    amax = max(counts_shape)
    # the compiled kernel needs the guard to hold for every reachable regret
    for l, C in enumerate(Cs):
        bound = (counts_shape[l] - 1) * float(np.ptp(game.utilities[l]))
        if not C > bound:
            return _run_reference(game, steps, u, Cs, marks, record_actions)
    utils = np.stack([uu.ravel() for uu in game.utilities])
    strides = np.array([int(np.prod(counts_shape[l + 1:])) for l in range(L)], dtype=np.int64)
    n_actions = np.array(counts_shape, dtype=np.int64)
    regrets = np.zeros((L, amax, amax))
    last = np.zeros(L, dtype=np.int64)
    counts = np.zeros(int(np.prod(counts_shape)), dtype=np.int64)
    C_arr = np.array(Cs)
    run = GameRun(EmpiricalDistribution(counts.reshape(counts_shape), steps), [])
    k = 1
    for stop in sorted(set(marks) | {steps}):
        _regret_kernel(k, stop + 1, u, utils, strides, n_actions, C_arr, regrets, last, counts)
        k = stop + 1
        if stop in marks:
            states = _states(regrets, last, counts_shape, Cs)
            run.checkpoints.append(_checkpoint(game, states, counts.reshape(counts_shape), stop))
    run.states = _states(regrets, last, counts_shape, Cs)
    run.empirical = EmpiricalDistribution(counts.reshape(counts_shape).copy(), steps)
    return run


def _states(regrets, last, shape, Cs):
    return [RegretState(regrets[l, : shape[l], : shape[l]].copy(), int(last[l]), Cs[l]) for l in range(len(shape))]


def _checkpoint(game, states, counts, step) -> Checkpoint:
    dist = EmpiricalDistribution(counts.copy(), step)
    return Checkpoint(step, tuple(max_positive_regret(s) for s in states), ce_violation(dist, game)[0])


def _run_reference(game, steps, u, Cs, marks, record_actions) -> GameRun:
    L = game.n_players
    shape = game.action_counts
    counts = np.zeros(shape, dtype=np.int64)
    states = [RegretState.zero(shape[l], 0, Cs[l]) for l in range(L)]
    actions = np.empty((steps, L), dtype=np.int64) if record_actions else None
    run = GameRun(EmpiricalDistribution(counts, steps), states, actions)
    for k in range(1, steps + 1):
        if k == 1:
            profile = [min(int(u[0, l] * shape[l]), shape[l] - 1) for l in range(L)]
        else:
            profile = [_sample(action_pmf(states[l]), u[k - 1, l]) for l in range(L)]
        counts[tuple(profile)] += 1
        states = [regret_update(states[l], profile[l], game.payoffs(l, profile), k) for l in range(L)]
        if actions is not None:
            actions[k - 1] = profile
        if k in marks:
            run.checkpoints.append(_checkpoint(game, states, counts, k))
    run.states = states
    run.empirical = EmpiricalDistribution(counts, steps)
    return run


def max_positive_regret(state: RegretState) -> float:
    return float(np.max(np.maximum(state.regrets, 0.0)))


def ce_violation(dist: EmpiricalDistribution, game: GameSpec):
    """Largest correlated-equilibrium constraint value and its ``(l, j, i)``.

    For player ``l`` recommended ``j`` the gain from deviating to ``i`` is
    ``sum_{a^{-l}} mu(j, a^{-l}) [U^l(i, a^{-l}) - U^l(j, a^{-l})]``; a
    value ``<= 0`` everywhere means ``mu`` is a correlated equilibrium.
    Indices in the returned triple are 0-based.
    """
    mu = np.asarray(dist.pmf, dtype=float)
    best, where = -np.inf, None
    for l in range(game.n_players):
        A = game.action_counts[l]
        M = np.moveaxis(mu, l, 0).reshape(A, -1)
        U = np.moveaxis(game.utilities[l], l, 0).reshape(A, -1)
        gain = M @ U.T - (M * U).sum(axis=1)[:, None]  # gain[j, i]
        np.fill_diagonal(gain, -np.inf if A > 1 else 0.0)
        j, i = np.unravel_index(np.argmax(gain), gain.shape)
        if gain[j, i] > best:
            best, where = float(gain[j, i]), (l, int(j), int(i))
    return best, where


def fuse_group_regrets(states: Sequence[RegretState], weights: Sequence[float]) -> RegretState:
    """Reputation-weighted sum of member regrets; the first member leads."""
    if len(states) == 0 or len(states) != len(weights):
        raise ValueError("need one weight per member and at least one member")
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ValueError("weights must be nonnegative and sum to 1")
    shape = states[0].regrets.shape
    if any(s.regrets.shape != shape for s in states):
        raise ShapeMismatch("group members must share the same action space")
    fused = sum(wi * s.regrets for wi, s in zip(w, states))
    return RegretState(np.asarray(fused, dtype=float), states[0].last_action, states[0].normalizer)


def coordination_game() -> GameSpec:
    U = np.eye(2)
    return GameSpec((U, U))


def anticoordination_game() -> GameSpec:
    U = 1.0 - np.eye(2)
    return GameSpec((U, U))


def congestion_game(players: int = 3, routes: int = 2) -> GameSpec:
    """Each player picks a route; payoff falls linearly with the route's load."""
    shape = (routes,) * players
    utils = []
    for l in range(players):
        u = np.empty(shape)
        for profile in np.ndindex(*shape):
            load = sum(1 for a in profile if a == profile[l])
            u[profile] = 1.0 - (load - 1) / (players - 1)
        utils.append(u)
    return GameSpec(tuple(utils))
