"""Independent per-agent policy learning for Chicken Coop.

The observation space is the finite set of opponent indices, so each agent's
policy is a linear layer on the one-hot observation: a logit table with one
row per observed index plus a bias row shared by every context. Updates use
the PPO clipped surrogate with closed-form softmax gradients, and a
per-context value table serves as the baseline.
"""

import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from ._validation import check_positive, check_probability
from .exceptions import InvalidConfigurationError, SnapshotDecodeError
from .game import Action, CoopConfig, EpisodeBatch, hawk_dove_probabilities, play_episodes

SNAPSHOT_FORMAT = "chicken-coop-policy"
SNAPSHOT_VERSION = 1


class PolicyTable:
    """Logits ``[n_contexts, 2]`` (columns ordered as :class:`Action`),
    a shared logit bias ``[2]`` and a value baseline ``[n_contexts]``."""

    def __init__(self, logits, values, bias=None):
        logits = np.array(logits, dtype=float)
        values = np.array(values, dtype=float)
        bias = np.zeros(2) if bias is None else np.array(bias, dtype=float)
        if logits.ndim != 2 or logits.shape[1] != 2:
            raise ValueError(f"logits must have shape (n_contexts, 2), got {logits.shape}")
        if values.shape != (logits.shape[0],):
            raise ValueError("values must have one entry per context")
        if bias.shape != (2,):
            raise ValueError("bias must have shape (2,)")
        if not (np.isfinite(logits).all() and np.isfinite(values).all() and np.isfinite(bias).all()):
            raise ValueError("policy parameters must be finite")
        self.logits = logits
        self.values = values
        self.bias = bias

    @classmethod
    def zeros(cls, n_contexts: int) -> "PolicyTable":
        return cls(np.zeros((n_contexts, 2)), np.zeros(n_contexts))

    @property
    def n_contexts(self) -> int:
        return self.logits.shape[0]

    def effective_logits(self) -> np.ndarray:
        return self.logits + self.bias

    def copy(self) -> "PolicyTable":
        return PolicyTable(self.logits.copy(), self.values.copy(), self.bias.copy())

    def __eq__(self, other):
        if not isinstance(other, PolicyTable):
            return NotImplemented
        return (
            np.array_equal(self.logits, other.logits)
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.bias, other.bias)
        )

    def __repr__(self):
        return f"PolicyTable(n_contexts={self.n_contexts})"


@dataclass(frozen=True)
class PpoHyperparams:
    """Learner settings.

    ``learning_rate`` defaults to the value picked by the tabular pilot sweep;
    ``discount_gamma`` is stored but has no effect on single-round episodes.
    ``shared_bias=False`` disables the context-shared logit bias and reduces
    the policy to an independent table per opponent.
    """

    learning_rate: float = 0.05
    clip_epsilon: float = 0.3
    discount_gamma: float = 0.99
    episodes_per_generation: int = 512
    update_epochs: int = 10
    entropy_coefficient: float = 0.0
    value_learning_rate: float | None = None
    shared_bias: bool = True

    def __post_init__(self):
        check_positive(self.learning_rate, "learning_rate")
        check_positive(self.clip_epsilon, "clip_epsilon")
        check_probability(self.discount_gamma, "discount_gamma")
        check_positive(self.episodes_per_generation, "episodes_per_generation", integer=True)
        check_positive(self.update_epochs, "update_epochs", integer=True)
        check_positive(self.entropy_coefficient, "entropy_coefficient", allow_zero=True)
        if self.value_learning_rate is not None:
            check_positive(self.value_learning_rate, "value_learning_rate")

    @property
    def baseline_learning_rate(self) -> float:
        """``value_learning_rate``, falling back to ``learning_rate``."""
        if self.value_learning_rate is None:
            return self.learning_rate
        return self.value_learning_rate


class Transition(NamedTuple):
    context: int
    action: Action
    reward: float
    old_action_probability: float


@dataclass(frozen=True)
class TransitionBatch:
    """Column-oriented transitions of one agent."""

    context: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    old_action_probability: np.ndarray

    def __post_init__(self):
        if np.any(self.old_action_probability <= 0):
            raise ValueError("old_action_probability must be > 0")

    def __len__(self):
        return self.context.shape[0]

    @classmethod
    def from_transitions(cls, transitions: Sequence[Transition]) -> "TransitionBatch":
        return cls(
            np.array([t.context for t in transitions], dtype=np.intp),
            np.array([int(t.action) for t in transitions], dtype=np.intp),
            np.array([t.reward for t in transitions], dtype=float),
            np.array([t.old_action_probability for t in transitions], dtype=float),
        )

    @classmethod
    def from_episodes(cls, episodes: EpisodeBatch, agent: int) -> "TransitionBatch":
        return cls(
            episodes.observed_opponent[:, agent].astype(np.intp),
            episodes.action[:, agent].astype(np.intp),
            episodes.reward[:, agent].astype(float),
            episodes.action_probability[:, agent].astype(float),
        )


def as_batch(batch) -> TransitionBatch:
    if isinstance(batch, TransitionBatch):
        return batch
    return TransitionBatch.from_transitions(list(batch))


@dataclass
class AgentTrainState:
    policy: PolicyTable
    frozen: bool = False

    def copy(self) -> "AgentTrainState":
        return AgentTrainState(self.policy.copy(), self.frozen)


class UpdateStats(NamedTuple):
    surrogate: float
    value_loss: float
    mean_abs_logit_change: float


def action_probabilities(policy: PolicyTable, context: int) -> tuple[float, float]:
    """Softmax over the two action logits of ``context``: ``(hawk_p, dove_p)``."""
    if not 0 <= context < policy.n_contexts:
        raise IndexError(f"context {context} out of range for {policy.n_contexts} contexts")
    hawk, dove = hawk_dove_probabilities(policy.effective_logits()[context])
    return float(hawk), float(dove)


def sample_action(policy: PolicyTable, context: int, rng) -> tuple[Action, float]:
    hawk, dove = action_probabilities(policy, context)
    if rng.random() < hawk:
        return Action.HAWK, hawk
    return Action.DOVE, dove


def compute_advantage(tr: Transition, policy: PolicyTable) -> float:
    return tr.reward - policy.values[tr.context]


def _probabilities(policy: PolicyTable, batch: TransitionBatch) -> np.ndarray:
    z = policy.effective_logits()[batch.context]
    hawk, dove = hawk_dove_probabilities(z)
    probs = np.empty((len(batch), 2))
    probs[:, Action.HAWK] = hawk
    probs[:, Action.DOVE] = dove
    return probs


def surrogate_objective(policy: PolicyTable, batch, advantages: np.ndarray,
                        hyper: PpoHyperparams) -> float:
    """Mean clipped surrogate plus the entropy bonus, for the current parameters."""
    batch = as_batch(batch)
    eps = hyper.clip_epsilon
    probs = _probabilities(policy, batch)
    rho = probs[np.arange(len(batch)), batch.action] / batch.old_action_probability
    clipped = np.clip(rho, 1.0 - eps, 1.0 + eps)
    obj = np.minimum(rho * advantages, clipped * advantages).mean()
    if hyper.entropy_coefficient:
        ent = -(probs * np.log(probs)).sum(axis=1)
        obj += hyper.entropy_coefficient * ent.mean()
    return float(obj)


def surrogate_gradient(policy: PolicyTable, batch, advantages: np.ndarray,
                       hyper: PpoHyperparams) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of :func:`surrogate_objective`.

    Returns ``(d/d logits, d/d bias)``. A transition contributes only while
    its ratio sits on the unclipped side of the ``min``.
    """
    batch = as_batch(batch)
    n = len(batch)
    eps = hyper.clip_epsilon
    probs = _probabilities(policy, batch)
    rho = probs[np.arange(n), batch.action] / batch.old_action_probability
    active = np.where(advantages >= 0, rho <= 1.0 + eps, rho >= 1.0 - eps)
    onehot = np.zeros((n, 2))
    onehot[np.arange(n), batch.action] = 1.0
    coef = np.where(active, advantages * rho, 0.0)
    gz = coef[:, None] * (onehot - probs)
    if hyper.entropy_coefficient:
        logp = np.log(probs)
        ent = -(probs * logp).sum(axis=1, keepdims=True)
        gz += hyper.entropy_coefficient * (-probs * (logp + ent))
    gz /= n
    g_logits = np.zeros_like(policy.logits)
    np.add.at(g_logits, batch.context, gz)
    return g_logits, gz.sum(axis=0)


def ppo_update(state: AgentTrainState, batch, hyper: PpoHyperparams) -> UpdateStats:
    """Run ``update_epochs`` full-batch clipped-surrogate ascent steps in place.

    Frozen agents are left untouched.
    """
    policy = state.policy
    batch = as_batch(batch)
    if state.frozen:
        return UpdateStats(math.nan, math.nan, 0.0)
    if len(batch) == 0:
        raise ValueError("ppo_update needs a non-empty batch for a trainable agent")
    if batch.context.min() < 0 or batch.context.max() >= policy.n_contexts:
        raise IndexError("transition context out of range")
    n = len(batch)
    advantages = batch.reward - policy.values[batch.context]
    before = policy.effective_logits()
    for _ in range(hyper.update_epochs):
        g_logits, g_bias = surrogate_gradient(policy, batch, advantages, hyper)
        policy.logits += hyper.learning_rate * g_logits
        if hyper.shared_bias:
            policy.bias += hyper.learning_rate * g_bias
        residual = batch.reward - policy.values[batch.context]
        policy.values += hyper.baseline_learning_rate * np.bincount(
            batch.context, weights=residual, minlength=policy.n_contexts
        ) / n
    residual = batch.reward - policy.values[batch.context]
    return UpdateStats(
        surrogate=surrogate_objective(policy, batch, advantages, hyper),
        value_loss=float(0.5 * np.mean(residual**2)),
        mean_abs_logit_change=float(np.abs(policy.effective_logits() - before).mean()),
    )


def train_generation(population: Sequence[AgentTrainState], config: CoopConfig,
                     hyper: PpoHyperparams, rng, first_episode_id: int = 0):
    """Play one generation of episodes, then update every non-frozen agent.

    Returns the generation's :class:`EpisodeBatch` (played with the
    pre-update policies) and one :class:`UpdateStats` per agent.
    """
    if len(population) != config.n_agents:
        raise InvalidConfigurationError(
            f"population has {len(population)} agents, config expects {config.n_agents}",
            "population",
        )
    episodes = play_episodes(
        [s.policy for s in population], config, hyper.episodes_per_generation, rng,
        first_episode_id=first_episode_id,
    )
    stats = [
        ppo_update(state, TransitionBatch.from_episodes(episodes, i), hyper)
        for i, state in enumerate(population)
    ]
    return episodes, stats


def snapshot(state: AgentTrainState) -> str:
    """Serialize a train state as a JSON document (lossless for finite floats)."""
    p = state.policy
    doc = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "n_contexts": p.n_contexts,
        "logits": [float(x) for x in p.logits.ravel()],
        "bias": [float(x) for x in p.bias],
        "values": [float(x) for x in p.values],
        "frozen": bool(state.frozen),
    }
    return json.dumps(doc, sort_keys=True)


def restore(payload) -> AgentTrainState:
    if isinstance(payload, (bytes, bytearray)):
        try:
            payload = payload.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SnapshotDecodeError(f"snapshot is not UTF-8: {exc}") from None
    try:
        doc = json.loads(payload)
    except (json.JSONDecodeError, TypeError) as exc:
        raise SnapshotDecodeError(f"snapshot is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != SNAPSHOT_FORMAT:
        raise SnapshotDecodeError("missing or wrong snapshot format tag")
    if doc.get("version") != SNAPSHOT_VERSION:
        raise SnapshotDecodeError(f"unsupported snapshot version {doc.get('version')!r}")
    n = doc.get("n_contexts")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise SnapshotDecodeError("n_contexts must be a positive integer")
    frozen = doc.get("frozen")
    if not isinstance(frozen, bool):
        raise SnapshotDecodeError("frozen must be a boolean")
    try:
        logits = _float_list(doc, "logits", 2 * n)
        bias = _float_list(doc, "bias", 2)
        values = _float_list(doc, "values", n)
        policy = PolicyTable(np.array(logits).reshape(n, 2), values, bias)
    except (ValueError, TypeError) as exc:
        raise SnapshotDecodeError(str(exc)) from None
    return AgentTrainState(policy, frozen)


def _float_list(doc, key, length):
    raw = doc.get(key)
    if not isinstance(raw, list) or len(raw) != length:
        raise SnapshotDecodeError(f"{key} must be a list of {length} numbers")
    if any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in raw):
        raise SnapshotDecodeError(f"{key} must contain only numbers")
    return [float(x) for x in raw]
