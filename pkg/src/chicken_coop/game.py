"""Chicken payoffs and the N-player Chicken Coop episode mechanics.

Each episode splits the population into uniformly random pairs, every agent
observes (possibly noisily) the index of its opponent, and each pair plays a
single simultaneous round of Chicken. Rewards always come from the true
pairing, never from the observation.
"""

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterator, Sequence

import numpy as np
from scipy.special import expit

from ._validation import check_n_agents, check_probability, check_seed
from .exceptions import InvalidConfigurationError

_P_MIN = np.finfo(float).tiny
_P_MAX = np.nextafter(1.0, 0.0)


class Action(IntEnum):
    """The two Chicken actions. Integer values index logit columns."""

    HAWK = 0
    DOVE = 1


@dataclass(frozen=True)
class RewardConstants:
    """Chicken payoffs; must satisfy ``T > R > S > P``."""

    t_reward: float = 5.0
    r_reward: float = 0.0
    s_reward: float = -2.0
    p_reward: float = -10.0

    def __post_init__(self):
        if not (self.t_reward > self.r_reward > self.s_reward > self.p_reward):
            raise InvalidConfigurationError(
                "reward constants must satisfy T > R > S > P, got "
                f"T={self.t_reward}, R={self.r_reward}, S={self.s_reward}, P={self.p_reward}",
                "rewards",
            )

    def matrix(self) -> np.ndarray:
        """Row player's payoff indexed ``[own action, opponent action]``."""
        m = np.empty((2, 2))
        m[Action.HAWK, Action.HAWK] = self.p_reward
        m[Action.HAWK, Action.DOVE] = self.t_reward
        m[Action.DOVE, Action.HAWK] = self.s_reward
        m[Action.DOVE, Action.DOVE] = self.r_reward
        return m


DEFAULT_REWARDS = RewardConstants()


def payoff(a, b, c: RewardConstants = DEFAULT_REWARDS) -> tuple[float, float]:
    """Return ``(row reward, column reward)`` for the joint action ``(a, b)``."""
    m = c.matrix()
    a, b = Action(a), Action(b)
    return float(m[a, b]), float(m[b, a])


@dataclass(frozen=True)
class CoopConfig:
    n_agents: int = 6
    opa: float = 1.0
    rewards: RewardConstants = field(default_factory=RewardConstants)
    rng_seed: int = 0

    def __post_init__(self):
        check_n_agents(self.n_agents)
        check_probability(self.opa, "opa")
        check_seed(self.rng_seed, "rng_seed")


@dataclass(frozen=True)
class Pairing:
    """A perfect matching of agent indices, stored canonically (sorted)."""

    pairs: tuple

    def __post_init__(self):
        canon = tuple(sorted(tuple(sorted((int(a), int(b)))) for a, b in self.pairs))
        flat = [i for p in canon for i in p]
        n = len(flat)
        if any(a == b for a, b in canon) or sorted(flat) != list(range(n)):
            raise ValueError(f"not a perfect matching: {self.pairs!r}")
        object.__setattr__(self, "pairs", canon)

    @property
    def n_agents(self) -> int:
        return 2 * len(self.pairs)

    def opponents(self) -> np.ndarray:
        opp = np.empty(self.n_agents, dtype=np.intp)
        for a, b in self.pairs:
            opp[a], opp[b] = b, a
        return opp


@dataclass(frozen=True)
class EpisodeRecord:
    episode_id: int
    pairing: Pairing
    true_opponent: tuple
    observed_opponent: tuple
    action: tuple
    reward: tuple


@dataclass(frozen=True)
class EpisodeBatch:
    """Array-backed block of consecutive episodes.

    Every array has shape ``(n_episodes, n_agents)``; row ``e`` is episode
    ``first_episode_id + e``.
    """

    true_opponent: np.ndarray
    observed_opponent: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    action_probability: np.ndarray
    first_episode_id: int = 0

    def __len__(self):
        return self.action.shape[0]

    @property
    def n_agents(self) -> int:
        return self.action.shape[1]

    def record(self, e: int) -> EpisodeRecord:
        opp = self.true_opponent[e]
        pairs = tuple((i, int(opp[i])) for i in range(self.n_agents) if i < opp[i])
        return EpisodeRecord(
            episode_id=self.first_episode_id + e,
            pairing=Pairing(pairs),
            true_opponent=tuple(int(x) for x in opp),
            observed_opponent=tuple(int(x) for x in self.observed_opponent[e]),
            action=tuple(Action(int(x)) for x in self.action[e]),
            reward=tuple(float(x) for x in self.reward[e]),
        )

    def records(self) -> Iterator[EpisodeRecord]:
        for e in range(len(self)):
            yield self.record(e)


def _opponents_from_permutations(perms: np.ndarray) -> np.ndarray:
    # adjacent positions of each shuffled row form the pairs
    opp = np.empty_like(perms)
    rows = np.arange(perms.shape[0])[:, None]
    opp[rows, perms[:, 0::2]] = perms[:, 1::2]
    opp[rows, perms[:, 1::2]] = perms[:, 0::2]
    return opp


def sample_pairings(n_agents: int, n_episodes: int, rng) -> np.ndarray:
    """Opponent arrays ``(n_episodes, n_agents)`` from uniform perfect matchings."""
    n_agents = check_n_agents(n_agents)
    perms = rng.permuted(np.tile(np.arange(n_agents), (n_episodes, 1)), axis=1)
    return _opponents_from_permutations(perms)


def sample_pairing(n_agents: int, rng) -> Pairing:
    """Uniformly random perfect matching on ``{0, ..., n_agents - 1}``.

    A Fisher-Yates shuffle paired off at adjacent positions; each matching is
    hit by exactly ``2**(n/2) * (n/2)!`` permutations.
    """
    n_agents = check_n_agents(n_agents)
    perm = rng.permutation(n_agents)
    return Pairing(tuple(zip(perm[0::2].tolist(), perm[1::2].tolist())))


def observe_opponent(true_idx: int, opa: float, n_agents: int, rng) -> int:
    """Return ``true_idx`` with probability ``opa``, else a uniform index in ``[0, n_agents)``."""
    if not 0 <= true_idx < n_agents:
        raise IndexError(f"agent index {true_idx} out of range for {n_agents} agents")
    if rng.random() < opa:
        return int(true_idx)
    return int(rng.integers(n_agents))


def observe_opponents(true_opponent: np.ndarray, opa: float, rng) -> np.ndarray:
    """Vectorized :func:`observe_opponent` over an opponent array."""
    n_agents = true_opponent.shape[-1]
    keep = rng.random(true_opponent.shape) < opa
    noise = rng.integers(0, n_agents, size=true_opponent.shape)
    return np.where(keep, true_opponent, noise)


def hawk_dove_probabilities(z: np.ndarray):
    """Two-action softmax over the last axis, kept strictly inside (0, 1)."""
    d = z[..., Action.HAWK] - z[..., Action.DOVE]
    return np.clip(expit(d), _P_MIN, _P_MAX), np.clip(expit(-d), _P_MIN, _P_MAX)


def _stack_logits(policies: Sequence) -> np.ndarray:
    tables = []
    for p in policies:
        p = getattr(p, "policy", p)
        tables.append(p.effective_logits())
    return np.stack(tables)


def play_episodes(policies: Sequence, config: CoopConfig, n_episodes: int, rng,
                  first_episode_id: int = 0) -> EpisodeBatch:
    """Play ``n_episodes`` independent episodes with fixed policies.

    ``policies`` holds one policy table (or train state) per agent index.
    """
    n = config.n_agents
    if len(policies) != n:
        raise InvalidConfigurationError(
            f"got {len(policies)} policies for {n} agents", "policies"
        )
    logits = _stack_logits(policies)
    if logits.shape[1] != n:
        raise InvalidConfigurationError(
            f"policies have {logits.shape[1]} contexts, population has {n} agents", "policies"
        )
    opp = sample_pairings(n, n_episodes, rng)
    obs = observe_opponents(opp, config.opa, rng)
    z = logits[np.arange(n)[None, :], obs]
    p_hawk, p_dove = hawk_dove_probabilities(z)
    hawk = rng.random((n_episodes, n)) < p_hawk
    action = np.where(hawk, Action.HAWK, Action.DOVE).astype(np.int8)
    prob = np.where(hawk, p_hawk, p_dove)
    rows = np.arange(n_episodes)[:, None]
    reward = config.rewards.matrix()[action, action[rows, opp]]
    return EpisodeBatch(
        true_opponent=opp,
        observed_opponent=obs,
        action=action,
        reward=reward,
        action_probability=prob,
        first_episode_id=first_episode_id,
    )


def play_episode(policies: Sequence, config: CoopConfig, rng, episode_id: int = 0) -> EpisodeRecord:
    """Play one Chicken Coop episode and return its record."""
    return play_episodes(policies, config, 1, rng, first_episode_id=episode_id).record(0)
