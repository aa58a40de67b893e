"""Scikit-learn style estimator wrapping one Chicken Coop population."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import as_generator, check_positive, check_probability
from .exceptions import InvalidConfigurationError
from .game import Action, CoopConfig, RewardConstants, hawk_dove_probabilities
from .metrics import InteractionLog, generation_metrics
from .policy import (
    AgentTrainState,
    PolicyTable,
    PpoHyperparams,
    train_generation,
)


class ChickenCoopPopulation(BaseEstimator):
    """Train a population of independent learners on Chicken Coop.

    ``fit`` plays generations until every pair's rapport exceeds ``eta`` for
    ``convergence_window`` consecutive generations, or ``max_generations``
    is reached. Fitting ignores ``X`` and ``y``; they exist for API
    compatibility only.

    Parameters
    ----------
    n_agents : int
        Even population size.
    opa : float
        Opponent perception accuracy in ``[0, 1]``.
    rewards : RewardConstants or None
        Chicken payoffs; ``None`` means ``T=5, R=0, S=-2, P=-10``.
    learning_rate, clip_epsilon, discount_gamma, episodes_per_generation,
    update_epochs, entropy_coefficient, value_learning_rate, shared_bias
        Forwarded to :class:`~chicken_coop.policy.PpoHyperparams`.
    eta : float
        Dominance threshold.
    convergence_window : int
        Consecutive fully-related generations required to stop.
    max_generations : int
    random_state : int, SeedSequence, Generator or None

    Attributes
    ----------
    agents_ : list of AgentTrainState
    history_ : list of GenerationMetrics
        Empty when fitted with ``keep_history=False``.
    converged_ : bool
    n_generations_ : int
    interaction_log_ : InteractionLog
        Counts from the final generation.
    hierarchy_ : DominanceDigraph or None
        Hierarchy of the final generation (possibly incomplete).
    aggressiveness_ : ndarray of shape (n_agents,)
        Final-generation aggressiveness against all opponents.
    classes_ : ndarray
        ``[Action.HAWK, Action.DOVE]``, the column order of ``predict_proba``.
    """

    def __init__(
        self,
        n_agents=6,
        opa=1.0,
        rewards=None,
        learning_rate=0.05,
        clip_epsilon=0.3,
        discount_gamma=0.99,
        episodes_per_generation=512,
        update_epochs=10,
        entropy_coefficient=0.0,
        value_learning_rate=None,
        shared_bias=True,
        eta=0.55,
        convergence_window=10,
        max_generations=5000,
        random_state=None,
    ):
        self.n_agents = n_agents
        self.opa = opa
        self.rewards = rewards
        self.learning_rate = learning_rate
        self.clip_epsilon = clip_epsilon
        self.discount_gamma = discount_gamma
        self.episodes_per_generation = episodes_per_generation
        self.update_epochs = update_epochs
        self.entropy_coefficient = entropy_coefficient
        self.value_learning_rate = value_learning_rate
        self.shared_bias = shared_bias
        self.eta = eta
        self.convergence_window = convergence_window
        self.max_generations = max_generations
        self.random_state = random_state

    def _hyperparams(self) -> PpoHyperparams:
        return PpoHyperparams(
            learning_rate=self.learning_rate,
            clip_epsilon=self.clip_epsilon,
            discount_gamma=self.discount_gamma,
            episodes_per_generation=self.episodes_per_generation,
            update_epochs=self.update_epochs,
            entropy_coefficient=self.entropy_coefficient,
            value_learning_rate=self.value_learning_rate,
            shared_bias=self.shared_bias,
        )

    def _coop_config(self) -> CoopConfig:
        rewards = RewardConstants() if self.rewards is None else self.rewards
        return CoopConfig(n_agents=self.n_agents, opa=self.opa, rewards=rewards)

    def _validate_params(self):
        if not 0 < self.eta <= 1:
            raise InvalidConfigurationError(f"eta must lie in (0, 1], got {self.eta}", "eta")
        check_probability(self.opa, "opa")
        check_positive(self.convergence_window, "convergence_window", integer=True)
        check_positive(self.max_generations, "max_generations", integer=True)

    def fit(self, X=None, y=None, *, initial_agents=None, keep_history=True):
        """Train the population.

        ``initial_agents`` seeds the population with existing train states
        (copied, frozen flags preserved); by default every agent starts from
        zero logits and values.
        """
        self._validate_params()
        hyper = self._hyperparams()
        config = self._coop_config()
        n = config.n_agents
        if initial_agents is None:
            agents = [AgentTrainState(PolicyTable.zeros(n)) for _ in range(n)]
        else:
            agents = [s.copy() for s in initial_agents]
            if len(agents) != n or any(s.policy.n_contexts != n for s in agents):
                raise InvalidConfigurationError(
                    f"initial_agents must hold {n} policies with {n} contexts", "initial_agents"
                )
        rng = as_generator(self.random_state)

        history, streak = [], 0
        for g in range(self.max_generations):
            episodes, _ = train_generation(
                agents, config, hyper, rng, first_episode_id=g * hyper.episodes_per_generation
            )
            log = InteractionLog.from_episodes(episodes)
            metrics = generation_metrics(g, log, self.eta)
            if keep_history:
                history.append(metrics)
            streak = streak + 1 if metrics.all_related else 0
            if streak >= self.convergence_window:
                break

        self.agents_ = agents
        self.history_ = history
        self.converged_ = streak >= self.convergence_window
        self.n_generations_ = g + 1
        self.interaction_log_ = log
        self.final_metrics_ = metrics
        self.hierarchy_ = metrics.hierarchy
        self.aggressiveness_ = np.array(metrics.aggressiveness)
        self.classes_ = np.array([Action.HAWK, Action.DOVE])
        return self

    def predict_proba(self, X):
        """Action probabilities for rows of ``(agent, observed opponent)`` indices."""
        check_is_fitted(self, "agents_")
        X = check_array(X, dtype=np.int64)
        if X.shape[1] != 2:
            raise ValueError(f"X must have 2 columns (agent, observed opponent), got {X.shape[1]}")
        n = len(self.agents_)
        if X.min() < 0 or X.max() >= n:
            raise IndexError(f"indices must lie in [0, {n})")
        table = np.stack([s.policy.effective_logits() for s in self.agents_])
        hawk, dove = hawk_dove_probabilities(table[X[:, 0], X[:, 1]])
        return np.column_stack([hawk, dove])

    def predict(self, X):
        """Most probable action (ties resolved towards Hawk)."""
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def score(self, X=None, y=None):
        """Minimum pair rapport of the final generation."""
        check_is_fitted(self, "agents_")
        return self.final_metrics_.min_rapport
