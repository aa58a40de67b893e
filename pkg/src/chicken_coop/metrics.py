"""Dominance statistics computed from Chicken Coop interaction counts.

Aggressiveness, rapport and dominance relations are ratios of integer
counts; comparisons against the threshold ``eta`` are carried out in exact
rational arithmetic so that a difference of exactly ``eta`` is never
mistaken for a dominance relation.
"""

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from ._validation import check_index_subset
from .exceptions import UndefinedMetricError
from .game import Action, EpisodeBatch


@dataclass(frozen=True)
class InteractionLog:
    """Per ordered pair ``(i, j)``: episodes where ``i`` met ``j`` and where ``i`` played Hawk."""

    n_agents: int
    hawk_count: np.ndarray
    meet_count: np.ndarray

    def __post_init__(self):
        hawk = np.asarray(self.hawk_count, dtype=np.int64)
        meet = np.asarray(self.meet_count, dtype=np.int64)
        shape = (self.n_agents, self.n_agents)
        if hawk.shape != shape or meet.shape != shape:
            raise ValueError(f"count matrices must have shape {shape}")
        if not np.array_equal(meet, meet.T):
            raise ValueError("meet_count must be symmetric")
        if (hawk < 0).any() or (hawk > meet).any():
            raise ValueError("hawk_count must lie in [0, meet_count]")
        if np.diagonal(meet).any():
            raise ValueError("agents never meet themselves")
        object.__setattr__(self, "hawk_count", hawk)
        object.__setattr__(self, "meet_count", meet)

    @classmethod
    def empty(cls, n_agents: int) -> "InteractionLog":
        z = np.zeros((n_agents, n_agents), dtype=np.int64)
        return cls(n_agents, z, z.copy())

    @classmethod
    def from_episodes(cls, episodes: EpisodeBatch) -> "InteractionLog":
        n = episodes.n_agents
        agent = np.broadcast_to(np.arange(n), episodes.action.shape)
        flat = (agent * n + episodes.true_opponent).ravel()
        meet = np.bincount(flat, minlength=n * n).reshape(n, n)
        hawk = np.bincount(
            flat, weights=(episodes.action == Action.HAWK).ravel(), minlength=n * n
        ).reshape(n, n)
        return cls(n, hawk.astype(np.int64), meet)

    def __add__(self, other: "InteractionLog") -> "InteractionLog":
        if other.n_agents != self.n_agents:
            raise ValueError("cannot merge logs of different population sizes")
        return InteractionLog(
            self.n_agents, self.hawk_count + other.hawk_count, self.meet_count + other.meet_count
        )


class DominanceRelation(Enum):
    FIRST_DOMINATES = "first"
    SECOND_DOMINATES = "second"
    NO_RELATION = "none"


def _as_fraction(x) -> Fraction:
    # str() keeps the decimal the caller wrote: 0.55 -> 11/20
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(str(x))
    return Fraction(x)


def _eta(eta) -> Fraction:
    f = _as_fraction(eta)
    if not 0 < f <= 1:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    return f


def _others(log, i):
    return [j for j in range(log.n_agents) if j != i]


def aggressiveness(log: InteractionLog, i: int, opponents: Iterable[int] | None = None,
                   *, exact: bool = False):
    """Fraction of ``i``'s rounds against ``opponents`` (default: everyone) in which it played Hawk."""
    opps = _others(log, i) if opponents is None else list(opponents)
    hawk = int(sum(log.hawk_count[i, j] for j in opps))
    meet = int(sum(log.meet_count[i, j] for j in opps))
    if meet == 0:
        raise UndefinedMetricError(f"agent {i} has no meetings with opponents {opps}")
    g = Fraction(hawk, meet)
    return g if exact else float(g)


def _pair_counts(log, i, j):
    m = int(log.meet_count[i, j])
    if i == j or m == 0:
        raise UndefinedMetricError(f"agents {i} and {j} never met")
    return int(log.hawk_count[i, j]), int(log.hawk_count[j, i]), m


def rapport(log: InteractionLog, i: int, j: int, *, exact: bool = False):
    """``|g_i - g_j|`` on the rounds in which ``i`` and ``j`` played each other."""
    hi, hj, m = _pair_counts(log, i, j)
    r = Fraction(abs(hi - hj), m)
    return r if exact else float(r)


def dominance_relation(log: InteractionLog, i: int, j: int, eta) -> DominanceRelation:
    hi, hj, m = _pair_counts(log, i, j)
    diff = Fraction(hi - hj, m)
    eta = _eta(eta)
    if diff > eta:
        return DominanceRelation.FIRST_DOMINATES
    if -diff > eta:
        return DominanceRelation.SECOND_DOMINATES
    return DominanceRelation.NO_RELATION


def rapport_matrix(log: InteractionLog) -> np.ndarray:
    """Symmetric float rapport matrix; NaN where a pair never met and on the diagonal."""
    with np.errstate(invalid="ignore", divide="ignore"):
        diff = (log.hawk_count - log.hawk_count.T) / log.meet_count
    out = np.abs(diff)
    out[log.meet_count == 0] = np.nan
    return out


def dominance_matrix(log: InteractionLog, eta) -> np.ndarray:
    """Boolean ``D[i, j]`` true iff ``i -> j``, using exact integer comparisons."""
    eta = _eta(eta)
    lhs = (log.hawk_count - log.hawk_count.T) * eta.denominator
    rhs = log.meet_count * eta.numerator
    return (log.meet_count > 0) & (lhs > rhs)


@dataclass(frozen=True)
class DominanceDigraph:
    """Dominance relations as directed edges ``(dominant, subordinate)``."""

    n_agents: int
    edges: frozenset

    def __post_init__(self):
        edges = frozenset((int(d), int(s)) for d, s in self.edges)
        for d, s in edges:
            if not (0 <= d < self.n_agents and 0 <= s < self.n_agents) or d == s:
                raise ValueError(f"invalid edge {d}>{s} for {self.n_agents} agents")
            if (s, d) in edges:
                raise ValueError(f"both {d}>{s} and {s}>{d} present")
        object.__setattr__(self, "edges", edges)

    @property
    def complete(self) -> bool:
        return len(self.edges) == self.n_agents * (self.n_agents - 1) // 2

    @classmethod
    def from_adjacency(cls, adj) -> "DominanceDigraph":
        adj = np.asarray(adj, dtype=bool)
        rows, cols = np.nonzero(adj)
        return cls(adj.shape[0], frozenset(zip(rows.tolist(), cols.tolist())))

    @classmethod
    def from_order(cls, order: Sequence[int]) -> "DominanceDigraph":
        """Total order, most dominant first."""
        return cls(len(order), frozenset((order[a], order[b]) for a, b in combinations(range(len(order)), 2)))

    @classmethod
    def from_tokens(cls, n_agents: int, text: str) -> "DominanceDigraph":
        edges = []
        for tok in text.split():
            d, _, s = tok.partition(">")
            edges.append((int(d), int(s)))
        return cls(n_agents, frozenset(edges))

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n_agents, self.n_agents), dtype=bool)
        for d, s in self.edges:
            adj[d, s] = True
        return adj

    def scores(self) -> np.ndarray:
        return self.adjacency().sum(axis=1)

    def to_tokens(self) -> str:
        return " ".join(f"{d}>{s}" for d, s in sorted(self.edges))


def build_hierarchy(log: InteractionLog, eta) -> DominanceDigraph:
    meet = log.meet_count
    for i, j in combinations(range(log.n_agents), 2):
        if meet[i, j] == 0:
            raise UndefinedMetricError(f"agents {i} and {j} never met; dominance is undefined")
    return DominanceDigraph.from_adjacency(dominance_matrix(log, eta))


def _require_complete(h: DominanceDigraph):
    if not h.complete:
        raise ValueError("operation requires a complete dominance hierarchy (tournament)")


def is_transitive(h: DominanceDigraph) -> bool:
    """No directed 3-cycle; for tournaments, iff the score sequence is ``0..N-1``."""
    _require_complete(h)
    return sorted(h.scores().tolist()) == list(range(h.n_agents))


@dataclass(frozen=True)
class RankAssignment:
    """Condensation blocks, most dominant first, and each agent's rank interval."""

    blocks: tuple
    rank_of: dict

    @property
    def linear_ranks(self) -> frozenset:
        return frozenset(start for start, end in self.rank_of.values() if start == end)

    def is_linear(self, rank: int) -> bool:
        return rank in self.linear_ranks


def condense(h: DominanceDigraph) -> RankAssignment:
    """Strongly connected components of a tournament, in dominance order.

    A prefix of the score-sorted agents dominates everyone after it exactly
    when its score sum equals ``C(k, 2) + k (N - k)``; those prefix cuts are
    the component boundaries.
    """
    _require_complete(h)
    n = h.n_agents
    scores = h.scores()
    order = sorted(range(n), key=lambda a: (-scores[a], a))
    blocks, start, total = [], 0, 0
    for k in range(1, n + 1):
        total += int(scores[order[k - 1]])
        if total == k * (k - 1) // 2 + k * (n - k):
            blocks.append(tuple(sorted(order[start:k])))
            start = k
    rank_of, pos = {}, 0
    for block in blocks:
        for a in block:
            rank_of[a] = (pos, pos + len(block) - 1)
        pos += len(block)
    return RankAssignment(tuple(blocks), rank_of)


def _check_same_n(hierarchies):
    if not hierarchies:
        raise ValueError("need at least one hierarchy")
    n = hierarchies[0].n_agents
    for h in hierarchies:
        _require_complete(h)
        if h.n_agents != n:
            raise ValueError("hierarchies must share the same population size")
    return n


def rank_linearity(hierarchies: Sequence[DominanceDigraph], rank: int) -> float:
    """Fraction of hierarchies in which ``rank`` is held by a singleton component."""
    hierarchies = list(hierarchies)
    n = _check_same_n(hierarchies)
    if not 0 <= rank < n:
        raise ValueError(f"rank {rank} out of range for {n} agents")
    return sum(condense(h).is_linear(rank) for h in hierarchies) / len(hierarchies)


def _common_restricted(h, h2, indices):
    idx = set(indices)
    return sum(1 for d, s in h.edges & h2.edges if d in idx and s in idx)


def dhd(h: DominanceDigraph, h2: DominanceDigraph, *, exact: bool = False):
    """Share of dominance relations whose polarity differs between two hierarchies."""
    n = _check_same_n([h, h2])
    v = 1 - Fraction(2 * len(h.edges & h2.edges), n * (n - 1))
    return v if exact else float(v)


def rdhd(h: DominanceDigraph, h2: DominanceDigraph, indices: Iterable[int], *, exact: bool = False):
    """:func:`dhd` restricted to relations among ``indices``."""
    if h.n_agents != h2.n_agents:
        raise ValueError("hierarchies must share the same population size")
    idx = check_index_subset(indices, h.n_agents)
    if len(idx) < 2:
        raise ValueError("need at least two indices")
    for g in (h, h2):
        for a, b in combinations(idx, 2):
            if (a, b) not in g.edges and (b, a) not in g.edges:
                raise ValueError(f"pair ({a}, {b}) has no dominance relation")
    k = len(idx)
    v = 1 - Fraction(2 * _common_restricted(h, h2, idx), k * (k - 1))
    return v if exact else float(v)


def dhtf(h: DominanceDigraph, h2: DominanceDigraph, naive_indices: Iterable[int], *,
         exact: bool = False):
    """Transmission fidelity: ``1 - rdhd`` over the naive agents."""
    v = 1 - rdhd(h, h2, naive_indices, exact=True)
    return v if exact else float(v)


def count_distinct(hierarchies: Sequence[DominanceDigraph]) -> int:
    hierarchies = list(hierarchies)
    _check_same_n(hierarchies)
    return len({h.edges for h in hierarchies})


def render_condensed(h: DominanceDigraph, plain: bool = False) -> str:
    """Condensed notation, e.g. ``4 ⇒ {1,3,5} ⇒ 0 ⇒ 2``."""
    parts = []
    for block in condense(h).blocks:
        parts.append(str(block[0]) if len(block) == 1 else "{" + ",".join(map(str, block)) + "}")
    return (" => " if plain else " ⇒ ").join(parts)


@dataclass(frozen=True)
class GenerationMetrics:
    """Metrics of one generation's episode window.

    ``hierarchy`` is ``None`` when some pair never met in the window, and
    may be incomplete otherwise. ``all_related`` is the exact test that
    every pair's rapport exceeds ``eta``.
    """

    generation: int
    aggressiveness: tuple
    rapport: np.ndarray
    min_rapport: float
    mean_rapport: float
    all_related: bool
    hierarchy: DominanceDigraph | None


def generation_metrics(generation: int, log: InteractionLog, eta) -> GenerationMetrics:
    n = log.n_agents
    hawk = log.hawk_count.sum(axis=1)
    meet = log.meet_count.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        agg = tuple(float(x) for x in hawk / meet)
    rap = rapport_matrix(log)
    pairs = rap[np.triu_indices(n, 1)]
    dom = dominance_matrix(log, eta)
    met_all = bool((log.meet_count + np.eye(n, dtype=np.int64) > 0).all())
    return GenerationMetrics(
        generation=generation,
        aggressiveness=agg,
        rapport=rap,
        min_rapport=float(pairs.min()) if met_all else float("nan"),
        mean_rapport=float(pairs.mean()) if met_all else float("nan"),
        all_related=bool((dom | dom.T | np.eye(n, dtype=bool)).all()),
        hierarchy=DominanceDigraph.from_adjacency(dom) if met_all else None,
    )
