"""Small input validation helpers shared by configs and estimators."""

import numbers

import numpy as np

from .exceptions import InvalidConfigurationError


def check_n_agents(n_agents, field="n_agents"):
    if isinstance(n_agents, bool) or not isinstance(n_agents, numbers.Integral):
        raise InvalidConfigurationError(f"{field} must be an integer, got {n_agents!r}", field)
    if n_agents < 2 or n_agents % 2:
        raise InvalidConfigurationError(
            f"{field} must be an even integer >= 2, got {n_agents}", field
        )
    return int(n_agents)


def check_probability(value, field):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise InvalidConfigurationError(f"{field} must be a real number, got {value!r}", field)
    if not 0.0 <= value <= 1.0:
        raise InvalidConfigurationError(f"{field} must lie in [0, 1], got {value}", field)
    return float(value)


def check_positive(value, field, *, integer=False, allow_zero=False):
    kind = numbers.Integral if integer else numbers.Real
    if isinstance(value, bool) or not isinstance(value, kind):
        raise InvalidConfigurationError(f"{field} must be a number, got {value!r}", field)
    if value < 0 or (value == 0 and not allow_zero) or value != value:
        bound = ">= 0" if allow_zero else "> 0"
        raise InvalidConfigurationError(f"{field} must be {bound}, got {value}", field)
    return int(value) if integer else float(value)


def check_seed(seed, field="seed"):
    if isinstance(seed, bool) or not isinstance(seed, numbers.Integral):
        raise InvalidConfigurationError(f"{field} must be an integer, got {seed!r}", field)
    if not 0 <= seed < 2**64:
        raise InvalidConfigurationError(f"{field} must be an unsigned 64-bit integer", field)
    return int(seed)


def check_index_subset(indices, n_agents, field="indices"):
    arr = sorted({int(i) for i in indices})
    if arr and (arr[0] < 0 or arr[-1] >= n_agents):
        raise ValueError(f"{field} contains indices outside [0, {n_agents})")
    return arr


def as_generator(rng):
    """Accept a Generator, SeedSequence, int or None and return a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
