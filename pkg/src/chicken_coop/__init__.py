"""Emergent dominance hierarchies among independent learners in Chicken Coop."""

__version__ = "0.1.0"

from .estimator import ChickenCoopPopulation
from .game import Action, CoopConfig, RewardConstants, payoff, play_episode, play_episodes
from .metrics import (
    DominanceDigraph,
    InteractionLog,
    aggressiveness,
    build_hierarchy,
    condense,
    dhd,
    dhtf,
    is_transitive,
    rapport,
    rdhd,
)
from .policy import AgentTrainState, PolicyTable, PpoHyperparams

__all__ = [
    "Action",
    "AgentTrainState",
    "ChickenCoopPopulation",
    "CoopConfig",
    "DominanceDigraph",
    "InteractionLog",
    "PolicyTable",
    "PpoHyperparams",
    "RewardConstants",
    "aggressiveness",
    "build_hierarchy",
    "condense",
    "dhd",
    "dhtf",
    "is_transitive",
    "payoff",
    "play_episode",
    "play_episodes",
    "rapport",
    "rdhd",
]
