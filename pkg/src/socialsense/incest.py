"""Data-incest removal for social learning over information-flow DAGs.

Nodes are 1-based, ``n = s + S(k - 1)`` for agent ``s`` at epoch ``k``; an
edge ``(m, n)`` with ``m < n`` means node ``n`` sees the action of node ``m``.
Closures and fusion weights are computed in Python integers so they are
exact for any graph size.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from socialsense.belief import ModelParams, myopic_action, social_learning_filter
from socialsense.errors import (
    CausalityViolation,
    InvalidAgent,
    InvalidModel,
    MissingBelief,
    NotAchievable,
    TooLarge,
)

ORACLE_MAX_SEQUENCES = 2**12


def node_index(agent: int, epoch: int, agents: int) -> int:
    if not 1 <= agent <= agents:
        raise InvalidAgent(f"agent {agent} outside 1..{agents}")
    if epoch < 1:
        raise ValueError("epoch must be >= 1")
    return agent + agents * (epoch - 1)


def node_coords(n: int, agents: int) -> tuple[int, int]:
    """Inverse of :func:`node_index`: ``(agent, epoch)``."""
    return (n - 1) % agents + 1, (n - 1) // agents + 1


class InformationFlowGraph:
    """Growing causal DAG over nodes ``1..node_count``."""

    def __init__(self, agent_count: int, node_count: int, edges: Iterable[tuple[int, int]] = ()):
        if agent_count < 1 or node_count < 0:
            raise ValueError("need agent_count >= 1 and node_count >= 0")
        self.agent_count = agent_count
        self.node_count = node_count
        self._parents: dict[int, set[int]] = {n: set() for n in range(1, node_count + 1)}
        for m, n in edges:
            self.add_edge(m, n)

    def add_edge(self, m: int, n: int) -> "InformationFlowGraph":
        if m >= n:
            raise CausalityViolation(f"edge ({m}, {n}) does not point forward in time")
        if m < 1 or n > self.node_count:
            raise ValueError(f"edge ({m}, {n}) outside nodes 1..{self.node_count}")
        self._parents[n].add(m)
        return self

    def remove_edge(self, m: int, n: int) -> "InformationFlowGraph":
        self._parents[n].discard(m)
        return self

    def grow(self, node_count: int) -> "InformationFlowGraph":
        for n in range(self.node_count + 1, node_count + 1):
            self._parents[n] = set()
        self.node_count = max(self.node_count, node_count)
        return self

    def copy(self) -> "InformationFlowGraph":
        return InformationFlowGraph(self.agent_count, self.node_count, self.edges)

    def prefix(self, n: int) -> "InformationFlowGraph":
        """Subgraph ``G_n`` on nodes ``1..n``."""
        return InformationFlowGraph(self.agent_count, n, [(m, k) for m, k in self.edges if k <= n])

    @property
    def edges(self) -> list[tuple[int, int]]:
        return sorted((m, n) for n, ps in self._parents.items() for m in ps)

    def parents(self, n: int) -> set[int]:
        """Single-hop set ``H_n``."""
        return set(self._parents[n])

    def adjacency(self, n: Optional[int] = None) -> np.ndarray:
        """``A_n`` with ``A[m-1, k-1] = 1`` for each edge ``(m, k)``, ``k <= n``."""
        n = self.node_count if n is None else n
        A = np.zeros((n, n), dtype=np.int64)
        for m, k in self.edges:
            if k <= n:
                A[m - 1, k - 1] = 1
        return A


@dataclass(frozen=True)
class ClosureView:
    closure: np.ndarray
    single_hop: dict[int, frozenset[int]]
    multi_hop: dict[int, frozenset[int]]

    @property
    def size(self) -> int:
        return self.closure.shape[0]

    def column(self, n: int) -> list[int]:
        """``t_n``: first ``n - 1`` entries of column ``n`` of ``T_n``."""
        return [int(v) for v in self.closure[: n - 1, n - 1]]


def reachability_closure(graph: InformationFlowGraph) -> np.ndarray:
    N = graph.node_count
    reach = [0] * (N + 1)  # bit j-1 set => node j reachable from node i
    children: dict[int, list[int]] = {n: [] for n in range(1, N + 1)}
    for m, n in graph.edges:
        children[m].append(n)
    for i in range(N, 0, -1):
        bits = 1 << (i - 1)
        for c in children[i]:
            bits |= reach[c]
        reach[i] = bits
    T = np.zeros((N, N), dtype=np.int64)
    for i in range(1, N + 1):
        for j in range(i, N + 1):
            if reach[i] >> (j - 1) & 1:
                T[i - 1, j - 1] = 1
    return T


def inverse_closure(graph: InformationFlowGraph) -> np.ndarray:
    """``sgn((I - A)^{-1})`` evaluated in exact integer arithmetic.

    ``(I - A)^{-1}`` counts directed paths; entries can be huge, so they are
    kept as Python ints and only the sign pattern is returned.
    """
    N = graph.node_count
    A = graph.adjacency()
    inv = [[0] * N for _ in range(N)]
    for i in range(N - 1, -1, -1):
        succ = [k for k in range(i + 1, N) if A[i, k]]
        for j in range(N):
            v = 1 if i == j else 0
            for k in succ:
                v += inv[k][j]
            inv[i][j] = v
    return np.array([[1 if v != 0 else 0 for v in row] for row in inv], dtype=np.int64).reshape(N, N)


def transitive_closure(graph: InformationFlowGraph) -> ClosureView:
    T = reachability_closure(graph)
    check = inverse_closure(graph)
    if not np.array_equal(T, check):
        raise AssertionError("reachability closure disagrees with sgn((I - A)^-1)")
    A = graph.adjacency()
    N = graph.node_count
    single = {n: frozenset(int(m) + 1 for m in np.flatnonzero(A[: n - 1, n - 1])) for n in range(1, N + 1)}
    multi = {n: frozenset(int(m) + 1 for m in np.flatnonzero(T[: n - 1, n - 1])) for n in range(1, N + 1)}
    return ClosureView(T, single, multi)


@dataclass(frozen=True)
class FusionWeights:
    node: int
    weights: tuple[int, ...]
    single_hop: frozenset[int] = field(default_factory=frozenset)

    def nonzero(self) -> dict[int, int]:
        return {m: w for m, w in enumerate(self.weights, start=1) if w != 0}


def fusion_weights(closure: ClosureView, n: int) -> FusionWeights:
    """Solve ``T_{n-1} w = t_n`` exactly by integer back-substitution."""
    if n < 2:
        raise ValueError("fusion weights need n >= 2")
    T = closure.closure
    t = closure.column(n)
    w = [0] * (n - 1)
    for i in range(n - 2, -1, -1):
        acc = t[i]
        for k in range(i + 1, n - 1):
            if T[i, k]:
                acc -= w[k]
        w[i] = acc  # unit diagonal
    return FusionWeights(n, tuple(w), closure.single_hop[n])


@dataclass(frozen=True)
class Achievability:
    node: int
    achievable: bool
    violations: tuple[int, ...]

    def __bool__(self) -> bool:
        return self.achievable


def achievability(graph: InformationFlowGraph, n: int, closure: Optional[ClosureView] = None) -> Achievability:
    """Fair rating is achievable at ``n`` iff ``w_n(j) != 0`` implies ``A_n(j, n) = 1``."""
    if n == 1:
        return Achievability(1, True, ())  # the first node receives nothing
    closure = closure or transitive_closure(graph)
    w = fusion_weights(closure, n)
    bad = tuple(j for j, wj in w.nonzero().items() if j not in w.single_hop)
    return Achievability(n, not bad, bad)


class LogBeliefLedger:
    """Administrator's log beliefs, stored relative to the log prior.

    ``l_m = log pi_m - log pi_0`` so that a weighted sum of ledger entries
    carries the prior exactly once after :func:`fuse_fair` adds it back.
    """

    def __init__(self, prior):
        prior = np.asarray(prior, dtype=float)
        if np.any(prior <= 0):
            raise InvalidModel("log-belief fusion needs a strictly positive prior")
        self.prior_log = np.log(prior)
        self.entries: dict[int, np.ndarray] = {}

    def record(self, m: int, belief) -> np.ndarray:
        self.entries[m] = np.log(np.asarray(belief, dtype=float)) - self.prior_log
        return self.entries[m]

    def __getitem__(self, m: int) -> np.ndarray:
        return self.entries[m]

    def __contains__(self, m: int) -> bool:
        return m in self.entries


def _normalize_log(logp) -> np.ndarray:
    p = np.exp(logp - np.max(logp))
    return p / p.sum()


def fuse_fair(ledger: LogBeliefLedger, weights: FusionWeights, received: Mapping[int, np.ndarray]) -> np.ndarray:
    """Incest-free fused rating ``pi_{n-}`` from single-hop log beliefs."""
    needed = weights.nonzero()
    outside = [m for m in needed if m not in weights.single_hop]
    if outside:
        raise NotAchievable(weights.node, outside)
    missing = [m for m in needed if m not in received]
    if missing:
        raise MissingBelief(f"node {weights.node} needs beliefs from nodes {missing}")
    total = ledger.prior_log.copy()
    for m, wm in needed.items():
        total = total + wm * np.asarray(received[m], dtype=float)
    return _normalize_log(total)


def fuse_naive(received: Sequence) -> np.ndarray:
    """Normalised entrywise sum of the received beliefs (incest-prone)."""
    if len(received) == 0:
        raise ValueError("naive fusion needs at least one belief")
    s = np.sum(np.asarray(received, dtype=float), axis=0)
    return s / s.sum()


@dataclass(frozen=True)
class NodeRecord:
    node: int
    agent: int
    epoch: int
    fused: np.ndarray
    obs: int
    private: np.ndarray
    action: int
    public: np.ndarray
    achievable: bool


def _check_protocol_model(params: ModelParams):
    if not params.is_identity:
        raise InvalidModel("the reputation protocol requires an identity transition (static state)")
    if np.any(params.obs_likelihood <= 0):
        raise InvalidModel("the reputation protocol requires a strictly positive observation matrix")
    if params.reveal:
        raise InvalidModel("the reputation protocol uses myopic actions, not revealed observations")


def _bayes(belief, y: int, params: ModelParams) -> np.ndarray:
    num = params.obs_likelihood[:, y] * belief
    return num / num.sum()


def run_reputation_protocol(
    graph: InformationFlowGraph,
    params: ModelParams,
    seed: int,
    fusion: str = "fair",
) -> tuple[int, list[NodeRecord]]:
    """Simulate the reputation protocol in node order.

    Returns the sampled true state and one record per node. The state is
    drawn once from the prior, then one observation per node, all from
    ``numpy.random.default_rng(seed)`` via inverse-CDF draws.
    """
    if fusion not in ("fair", "naive"):
        raise ValueError(f"unknown fusion mode {fusion!r}")
    _check_protocol_model(params)
    closure = transitive_closure(graph)
    ledger = LogBeliefLedger(params.prior)
    rng = np.random.default_rng(seed)
    x = int(min(np.searchsorted(np.cumsum(params.prior), rng.random(), side="right"), params.n_states - 1))
    publics: dict[int, np.ndarray] = {}
    records = []
    for n in range(1, graph.node_count + 1):
        hop = closure.single_hop[n]
        ok = True
        if n >= 2:
            w = fusion_weights(closure, n)
            ok = not any(m not in hop for m in w.nonzero())
        if not hop:
            fused = np.array(params.prior, dtype=float)
        elif fusion == "fair":
            if not ok:
                raise NotAchievable(n, [m for m in w.nonzero() if m not in hop])
            fused = fuse_fair(ledger, w, {m: ledger[m] for m in hop})
        else:
            fused = fuse_naive([publics[m] for m in sorted(hop)])
        cdf = np.cumsum(params.obs_likelihood[x])
        y = int(min(np.searchsorted(cdf, rng.random(), side="right"), params.n_obs - 1))
        private = _bayes(fused, y, params)
        a = myopic_action(private, params.costs)
        public, _ = social_learning_filter(fused, a, params)
        publics[n] = public
        ledger.record(n, public)
        s, k = node_coords(n, graph.agent_count)
        records.append(NodeRecord(n, s, k, fused, y, private, a, public, ok))
    return x, records


def oracle_fair_rating(
    graph: InformationFlowGraph,
    n: int,
    params: ModelParams,
    actions: Mapping[int, int],
    decision_beliefs: Optional[Mapping[int, np.ndarray]] = None,
) -> np.ndarray:
    """``P(x | a_m, m in F_n)`` by exhaustive enumeration over private observations.

    Each upstream node ``m`` is assumed to act myopically on the Bayes update
    of its own rating and private observation. By default that rating is the
    oracle's own fair rating for ``m`` (the ideal protocol). Passing
    ``decision_beliefs`` instead fixes the rating each node actually used,
    which gives the true posterior under any other fusion rule.
    """
    _check_protocol_model(params)
    closure = transitive_closure(graph.prefix(n))
    F = sorted(closure.multi_hop[n])
    if params.n_obs ** len(F) > ORACLE_MAX_SEQUENCES:
        raise TooLarge(f"{params.n_obs}^{len(F)} observation sequences exceed the enumeration guard")
    prior = np.asarray(params.prior, dtype=float)
    B = params.obs_likelihood
    ratings: dict[int, np.ndarray] = {}

    def rating(m: int) -> np.ndarray:
        if decision_beliefs is not None:
            return np.asarray(decision_beliefs[m], dtype=float)
        if m not in ratings:
            ratings[m] = posterior(sorted(closure.multi_hop[m]))
        return ratings[m]

    def posterior(nodes: list[int]) -> np.ndarray:
        if not nodes:
            return prior.copy()
        chosen = {m: [myopic_action(_bayes(rating(m), y, params), params.costs) for y in range(params.n_obs)] for m in nodes}
        joint = np.zeros(params.n_states)
        for ys in itertools.product(range(params.n_obs), repeat=len(nodes)):
            if any(chosen[m][y] != actions[m] for m, y in zip(nodes, ys)):
                continue
            for x in range(params.n_states):
                p = prior[x]
                for y in ys:
                    p *= B[x, y]
                joint[x] += p
        total = joint.sum()
        if total == 0:
            raise ValueError("recorded actions have zero probability under the assumed decision rules")
        return joint / total

    return posterior(F)


def read_edge_list(path) -> InformationFlowGraph:
    """Parse ``S=<agents> N=<nodes>`` followed by one ``m n`` edge per line."""
    lines = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ValueError(f"{path}: empty edge list")
    header = dict(tok.split("=", 1) for tok in lines[0].split())
    try:
        graph = InformationFlowGraph(int(header["S"]), int(header["N"]))
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: bad header {lines[0]!r}, expected 'S=<agents> N=<nodes>'") from exc
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        if len(parts) != 2:
            raise ValueError(f"{path}: line {lineno}: expected 'm n', got {ln!r}")
        graph.add_edge(int(parts[0]), int(parts[1]))
    return graph


def write_edge_list(graph: InformationFlowGraph, path) -> None:
    body = "\n".join(f"{m} {n}" for m, n in graph.edges)
    Path(path).write_text(f"S={graph.agent_count} N={graph.node_count}\n{body}\n")


TWO_AGENT_LOOP_EDGES = [(1, 4), (1, 5), (1, 3), (2, 3), (2, 4), (2, 5), (2, 6), (3, 5), (3, 6), (4, 5), (4, 6)]


def two_agent_loop_graph() -> InformationFlowGraph:
    """Two agents over three epochs; node 5 hears nodes 1 and 2 both directly and via 3 and 4."""
    return InformationFlowGraph(2, 6, TWO_AGENT_LOOP_EDGES)
