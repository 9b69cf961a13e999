"""Finite-state Bayesian machinery: HMM filter, myopic actions and the
social learning filter.

Beliefs are plain float arrays over the state space. Every filter accepts
either a single belief of shape ``(X,)`` or a batch of shape ``(..., X)``;
the arithmetic per belief is the same in both cases, so a batched rollout
reproduces the scalar path bit for bit.

States, observations and actions are 0-based indices throughout the
Python API.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from socialsense.errors import InvalidModel, ZeroLikelihood, ZeroProbabilityAction

STOCHASTIC_TOL = 1e-12


def _readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def model_problems(transition, obs_likelihood, costs, prior, reveal=False) -> list[str]:
    """Return every violated precondition of a model (empty list if valid)."""
    problems = []
    P = np.asarray(transition, dtype=float)
    B = np.asarray(obs_likelihood, dtype=float)
    pi0 = np.asarray(prior, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        problems.append(f"transition must be square, got shape {P.shape}")
        return problems
    X = P.shape[0]
    if X < 2:
        problems.append("need at least 2 states")
    for i, row in enumerate(P):
        if np.any(row < 0) or abs(row.sum() - 1.0) > STOCHASTIC_TOL:
            problems.append(f"transition row {i + 1} is not a probability vector (sum={row.sum():.17g})")
    if B.ndim != 2 or B.shape[0] != X:
        problems.append(f"obs_likelihood must have {X} rows, got shape {B.shape}")
    else:
        if B.shape[1] < 2:
            problems.append("need at least 2 observation symbols")
        for i, row in enumerate(B):
            if not np.any(row > 0):
                problems.append(f"obs_likelihood row {i + 1} is all zeros")
            elif np.any(row < 0) or abs(row.sum() - 1.0) > STOCHASTIC_TOL:
                problems.append(f"obs_likelihood row {i + 1} is not a probability vector (sum={row.sum():.17g})")
    if costs is None:
        if not reveal:
            problems.append("costs are required unless agents reveal observations")
    else:
        c = np.asarray(costs, dtype=float)
        if c.ndim != 2 or c.shape[0] != X:
            problems.append(f"costs must have {X} rows, got shape {c.shape}")
        elif reveal and B.ndim == 2 and c.shape[1] != B.shape[1]:
            problems.append("observation-revealing mode needs one cost column per observation")
        elif c.shape[1] < 2:
            problems.append("need at least 2 actions")
        elif not np.all(np.isfinite(c)):
            problems.append("costs must be finite")
    if pi0.shape != (X,):
        problems.append(f"prior must have {X} entries, got shape {pi0.shape}")
    elif np.any(pi0 < 0) or abs(pi0.sum() - 1.0) > STOCHASTIC_TOL:
        problems.append(f"prior is not a probability vector (sum={pi0.sum():.17g})")
    return problems


@dataclass(frozen=True)
class ModelParams:
    """Transition matrix, observation likelihoods ``B[i, y] = P(y | x=i)``,
    action costs ``costs[i, a] = c(i, a)`` and the prior.

    With ``reveal=True`` agents broadcast their raw observation (``a = y``)
    instead of the myopic argmin; the action set is then the observation set.
    """

    transition: np.ndarray
    obs_likelihood: np.ndarray
    costs: Optional[np.ndarray]
    prior: np.ndarray
    reveal: bool = False

    def __post_init__(self):
        problems = model_problems(self.transition, self.obs_likelihood, self.costs, self.prior, self.reveal)
        if problems:
            raise InvalidModel("; ".join(problems))
        object.__setattr__(self, "transition", _readonly(self.transition))
        object.__setattr__(self, "obs_likelihood", _readonly(self.obs_likelihood))
        object.__setattr__(self, "prior", _readonly(self.prior))
        if self.costs is not None:
            object.__setattr__(self, "costs", _readonly(self.costs))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_obs(self) -> int:
        return self.obs_likelihood.shape[1]

    @property
    def n_actions(self) -> int:
        return self.n_obs if self.reveal else self.costs.shape[1]

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.transition, np.eye(self.n_states)))

    def with_(self, **changes) -> "ModelParams":
        fields = dict(
            transition=self.transition,
            obs_likelihood=self.obs_likelihood,
            costs=self.costs,
            prior=self.prior,
            reveal=self.reveal,
        )
        fields.update(changes)
        return ModelParams(**fields)


def predict(belief, params: ModelParams) -> np.ndarray:
    """One-step prediction ``P' pi``."""
    belief = np.asarray(belief, dtype=float)
    return (belief[..., :, None] * params.transition).sum(axis=-2)


def _obs_numerators(pred, params: ModelParams) -> np.ndarray:
    # num[..., y, i] = B(i, y) * pred(i)
    return params.obs_likelihood.T * pred[..., None, :]


def hmm_filter(prior, obs: int, params: ModelParams) -> np.ndarray:
    """Classical HMM filter: ``B_y P' pi / (1' B_y P' pi)``."""
    pred = predict(prior, params)
    num = params.obs_likelihood[:, obs] * pred
    norm = num.sum(axis=-1)
    if np.any(norm == 0):
        raise ZeroLikelihood(f"observation {obs} impossible under the predicted belief")
    return num / np.asarray(norm)[..., None]


def expected_costs(belief, costs) -> np.ndarray:
    belief = np.asarray(belief, dtype=float)
    return (belief[..., :, None] * costs).sum(axis=-2)


def myopic_action(belief, costs):
    """Index of the action minimising ``c_a' belief``; smallest index wins ties.

    Comparisons are exact; no tolerance is applied.
    """
    a = np.argmin(expected_costs(belief, costs), axis=-1)
    return int(a) if np.ndim(a) == 0 else a


def obs_actions(public, params: ModelParams) -> np.ndarray:
    """Action an agent takes for every possible observation, shape ``(..., Y)``."""
    public = np.asarray(public, dtype=float)
    if params.reveal:
        return np.broadcast_to(np.arange(params.n_obs), public.shape[:-1] + (params.n_obs,))
    num = _obs_numerators(predict(public, params), params)
    norm = num.sum(axis=-1, keepdims=True)
    # an impossible observation never contributes mass; any action label will do
    post = np.divide(num, norm, out=np.zeros_like(num), where=norm > 0)
    return np.argmin(expected_costs(post, params.costs), axis=-1)


def action_likelihoods(public, params: ModelParams) -> np.ndarray:
    """``R[..., a, i] = P(a | x=i, pi)`` for every action, shape ``(..., A, X)``."""
    acts = obs_actions(public, params)
    onehot = acts[..., :, None] == np.arange(params.n_actions)  # (..., Y, A)
    B_t = params.obs_likelihood.T  # (Y, X)
    terms = np.where(onehot[..., :, :, None], B_t[:, None, :], 0.0)  # (..., Y, A, X)
    return terms.sum(axis=-3)


def action_likelihood(public, action: int, params: ModelParams) -> np.ndarray:
    """Diagonal of ``R^pi_a``: the probability of ``action`` in each state."""
    return action_likelihoods(public, params)[..., action, :]


def social_learning_filter(public, action: int, params: ModelParams):
    """Public belief update ``T(pi, a)`` and its normaliser ``sigma(pi, a)``."""
    pred = predict(public, params)
    num = action_likelihood(public, action, params) * pred
    sigma = num.sum(axis=-1)
    if np.any(sigma == 0):
        raise ZeroProbabilityAction(f"action {action} has zero probability under the public belief")
    return num / np.asarray(sigma)[..., None], (float(sigma) if np.ndim(sigma) == 0 else sigma)


def social_filter_all(public, params: ModelParams):
    """``T(pi, a)`` and ``sigma(pi, a)`` for every action at once.

    Returns beliefs of shape ``(..., A, X)`` and normalisers ``(..., A)``.
    Where ``sigma == 0`` the belief slot holds the prediction ``P' pi``;
    it carries zero weight in any expectation.
    """
    pred = predict(public, params)
    num = action_likelihoods(public, params) * pred[..., None, :]
    sigma = num.sum(axis=-1)
    safe = np.where(sigma > 0, sigma, 1.0)[..., None]
    beliefs = np.where(sigma[..., None] > 0, num / safe, pred[..., None, :])
    return beliefs, sigma


def is_belief(p, tol: float = STOCHASTIC_TOL) -> bool:
    p = np.asarray(p, dtype=float)
    return bool(p.ndim == 1 and np.all(p >= 0) and abs(p.sum() - 1.0) <= tol)


def belief2(p2: float) -> np.ndarray:
    """Two-state belief with ``pi(2) = p2`` (i.e. ``[1 - p2, p2]``)."""
    return np.array([1.0 - p2, p2])
