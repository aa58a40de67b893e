"""Population experiments: emergence, observation ablation and transmission.

Every population draws its randomness from a ``SeedSequence`` keyed by the
master seed, an experiment stream tag and the population's own indices, so
results never depend on how many other populations run or in what order.
"""

from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from ._validation import check_n_agents, check_positive, check_probability, check_seed
from .estimator import ChickenCoopPopulation
from .exceptions import InvalidConfigurationError, InvalidInputError
from .game import RewardConstants
from .metrics import (
    DominanceDigraph,
    GenerationMetrics,
    condense,
    count_distinct,
    dhtf,
    is_transitive,
    rank_linearity,
)
from .policy import AgentTrainState, PolicyTable, PpoHyperparams

EMERGENCE_STREAM = 0
NAIVE_STREAM = 1
SELECTION_STREAM = 2

__all__ = [
    "AblationConfig",
    "AblationResult",
    "EmergenceConfig",
    "GenerationMetrics",
    "PopulationResult",
    "TransmissionConfig",
    "TransmissionResult",
    "TransmissionSample",
    "census",
    "linear_populations",
    "pilot_sweep",
    "rank_linearity_profile",
    "run_ablation",
    "run_emergence",
    "run_transmission",
    "summarize_by_rank",
    "summarize_transmission",
]


def seed_for(master_seed: int, stream: int, *index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(stream, *index))


@dataclass(frozen=True)
class EmergenceConfig:
    n_populations: int = 20
    n_agents: int = 6
    max_generations: int = 5000
    hyper: PpoHyperparams = field(default_factory=PpoHyperparams)
    eta: float = 0.55
    convergence_window: int = 10
    master_seed: int = 0
    opa: float = 1.0
    rewards: RewardConstants = field(default_factory=RewardConstants)

    def __post_init__(self):
        check_positive(self.n_populations, "n_populations", integer=True)
        check_n_agents(self.n_agents)
        check_positive(self.max_generations, "max_generations", integer=True)
        check_positive(self.convergence_window, "convergence_window", integer=True)
        check_seed(self.master_seed, "master_seed")
        check_probability(self.opa, "opa")
        if not 0 < self.eta <= 1:
            raise InvalidConfigurationError(f"eta must lie in (0, 1], got {self.eta}", "eta")


@dataclass(frozen=True)
class AblationConfig:
    opa_grid: tuple = tuple(round(0.1 * k, 1) for k in range(11))
    populations_per_point: int = 10
    base: EmergenceConfig = field(default_factory=EmergenceConfig)

    def __post_init__(self):
        grid = tuple(float(x) for x in self.opa_grid)
        if not grid:
            raise InvalidConfigurationError("opa_grid must not be empty", "opa_grid")
        for x in grid:
            check_probability(x, "opa_grid")
        if list(grid) != sorted(grid):
            raise InvalidConfigurationError("opa_grid must be sorted", "opa_grid")
        object.__setattr__(self, "opa_grid", grid)
        check_positive(self.populations_per_point, "populations_per_point", integer=True)


@dataclass(frozen=True)
class TransmissionConfig:
    n_source_populations: int = 10
    repeats_per_population: int = 30
    k_values: tuple | None = None
    naive_hyper: PpoHyperparams = field(default_factory=PpoHyperparams)
    base: EmergenceConfig = field(default_factory=EmergenceConfig)

    def __post_init__(self):
        n = self.base.n_agents
        ks = tuple(range(n - 1)) if self.k_values is None else tuple(int(k) for k in self.k_values)
        if not ks:
            raise InvalidConfigurationError("k_values must not be empty", "k_values")
        for k in ks:
            if not 0 <= k <= n - 2:
                raise InvalidConfigurationError(
                    f"every K must lie in [0, {n - 2}] so that at least two agents are naive, got {k}",
                    "k_values",
                )
        object.__setattr__(self, "k_values", ks)
        check_positive(self.n_source_populations, "n_source_populations", integer=True)
        check_positive(self.repeats_per_population, "repeats_per_population", integer=True)


@dataclass
class PopulationResult:
    index: int
    converged: bool
    n_generations: int
    hierarchy: DominanceDigraph | None
    aggressiveness: tuple
    history: list = field(default_factory=list)
    agents: list = field(default_factory=list)


def _estimator(cfg: EmergenceConfig, hyper: PpoHyperparams, opa: float, seed) -> ChickenCoopPopulation:
    return ChickenCoopPopulation(
        n_agents=cfg.n_agents,
        opa=opa,
        rewards=cfg.rewards,
        learning_rate=hyper.learning_rate,
        clip_epsilon=hyper.clip_epsilon,
        discount_gamma=hyper.discount_gamma,
        episodes_per_generation=hyper.episodes_per_generation,
        update_epochs=hyper.update_epochs,
        entropy_coefficient=hyper.entropy_coefficient,
        value_learning_rate=hyper.value_learning_rate,
        shared_bias=hyper.shared_bias,
        eta=cfg.eta,
        convergence_window=cfg.convergence_window,
        max_generations=cfg.max_generations,
        random_state=seed,
    )


def _result(index, est: ChickenCoopPopulation) -> PopulationResult:
    return PopulationResult(
        index=index,
        converged=est.converged_,
        n_generations=est.n_generations_,
        hierarchy=est.hierarchy_,
        aggressiveness=tuple(est.aggressiveness_.tolist()),
        history=est.history_,
        agents=est.agents_,
    )


def _train_population(cfg, index, opa, initial_agents=None):
    est = _estimator(cfg, cfg.hyper, opa, seed_for(cfg.master_seed, EMERGENCE_STREAM, index))
    return _result(index, est.fit(initial_agents=initial_agents))


def _parallel(n_jobs, tasks):
    if n_jobs == 1:
        return [fn(*args) for fn, *args in tasks]
    return Parallel(n_jobs=n_jobs)(delayed(fn)(*args) for fn, *args in tasks)


def run_emergence(cfg: EmergenceConfig, n_jobs: int = 1, initial_agents=None) -> list[PopulationResult]:
    """Train ``cfg.n_populations`` independent populations.

    ``initial_agents`` (a list of agent states, applied to every population)
    is mainly for the degenerate no-learning check where all agents are frozen.
    """
    tasks = [(_train_population, cfg, p, cfg.opa, initial_agents) for p in range(cfg.n_populations)]
    return _parallel(n_jobs, tasks)


@dataclass
class AblationResult:
    opa_grid: tuple
    populations: dict
    trajectories: dict
    final_mean_rapport: dict

    def spearman(self):
        """Spearman correlation between OPA and per-population final mean rapport."""
        x = [opa for opa in self.opa_grid for _ in self.final_mean_rapport[opa]]
        y = [r for opa in self.opa_grid for r in self.final_mean_rapport[opa]]
        return stats.spearmanr(x, y)


def _mean_rapport_trajectory(populations) -> np.ndarray:
    # converged populations stop early; hold their last value
    length = max(len(p.history) for p in populations)
    rows = []
    for p in populations:
        series = [m.mean_rapport for m in p.history]
        rows.append(series + [series[-1]] * (length - len(series)))
    return np.nanmean(np.array(rows), axis=0)


def run_ablation(cfg: AblationConfig, n_jobs: int = 1) -> AblationResult:
    """Train ``populations_per_point`` populations at every OPA value.

    Population ``p`` uses the same seed at every grid point, so the OPA=1
    point reproduces :func:`run_emergence` exactly.
    """
    base = replace(cfg.base, n_populations=cfg.populations_per_point)
    tasks = [(_train_population, base, p, opa) for opa in cfg.opa_grid for p in range(cfg.populations_per_point)]
    flat = _parallel(n_jobs, tasks)
    pops, traj, final = {}, {}, {}
    for g, opa in enumerate(cfg.opa_grid):
        group = flat[g * cfg.populations_per_point:(g + 1) * cfg.populations_per_point]
        pops[opa] = group
        traj[opa] = _mean_rapport_trajectory(group)
        final[opa] = [p.history[-1].mean_rapport for p in group]
    return AblationResult(cfg.opa_grid, pops, traj, final)


@dataclass(frozen=True)
class TransmissionSample:
    source: int
    repeat: int
    k: int
    experienced: tuple
    naive: tuple
    converged: bool
    n_generations: int
    dhtf: float | None
    hierarchy: DominanceDigraph | None


@dataclass
class TransmissionResult:
    samples: list
    summary: list


def _transplant(source_agents, experienced, n):
    agents = []
    for i in range(n):
        if i in experienced:
            agents.append(AgentTrainState(source_agents[i].policy.copy(), frozen=True))
        else:
            agents.append(AgentTrainState(PolicyTable.zeros(n)))
    return agents


def _transmission_sample(cfg: TransmissionConfig, source: PopulationResult, l: int, m: int, k: int):
    base = cfg.base
    n = base.n_agents
    pick = np.random.default_rng(seed_for(base.master_seed, SELECTION_STREAM, l, m, k))
    experienced = tuple(sorted(pick.choice(n, size=k, replace=False).tolist()))
    naive = tuple(i for i in range(n) if i not in experienced)
    agents = _transplant(source.agents, set(experienced), n)
    est = _estimator(base, cfg.naive_hyper, base.opa, seed_for(base.master_seed, NAIVE_STREAM, l, m, k))
    est.fit(initial_agents=agents, keep_history=False)
    fidelity = dhtf(source.hierarchy, est.hierarchy_, naive) if est.converged_ else None
    return TransmissionSample(
        source=source.index, repeat=m, k=k, experienced=experienced, naive=naive,
        converged=est.converged_, n_generations=est.n_generations_, dhtf=fidelity,
        hierarchy=est.hierarchy_,
    )


def check_source(source: PopulationResult, n_agents: int):
    if not source.converged or source.hierarchy is None or not source.hierarchy.complete:
        raise InvalidInputError(f"source population {source.index} has not converged")
    if len(source.agents) != n_agents:
        raise InvalidInputError(
            f"source population {source.index} has {len(source.agents)} agents, expected {n_agents}"
        )


def run_transmission(cfg: TransmissionConfig, sources: list[PopulationResult] | None = None,
                     n_jobs: int = 1) -> TransmissionResult:
    """Transplant random experienced subsets into naive populations and measure DHTF.

    Without ``sources``, ``n_source_populations`` emergence runs are trained
    first. Experienced agents keep their indices and are frozen; naive
    agents fill the remaining indices.
    """
    if sources is None:
        sources = run_emergence(replace(cfg.base, n_populations=cfg.n_source_populations), n_jobs)
    sources = list(sources)[:cfg.n_source_populations]
    for s in sources:
        check_source(s, cfg.base.n_agents)
    tasks = [
        (_transmission_sample, cfg, s, l, m, k)
        for l, s in enumerate(sources)
        for m in range(cfg.repeats_per_population)
        for k in cfg.k_values
    ]
    samples = _parallel(n_jobs, tasks)
    return TransmissionResult(samples, summarize_transmission(samples))


def summarize_transmission(samples) -> list[dict]:
    """Per-K median and quartiles of DHTF over converged samples."""
    rows = []
    for k in sorted({s.k for s in samples}):
        values = np.array([s.dhtf for s in samples if s.k == k and s.converged], dtype=float)
        total = sum(1 for s in samples if s.k == k)
        if values.size:
            q1, med, q3 = np.percentile(values, [25, 50, 75]).tolist()
        else:
            q1 = med = q3 = float("nan")
        rows.append({"k": k, "n_samples": total, "n_failed": total - int(values.size),
                     "median": med, "q1": q1, "q3": q3})
    return rows


def linear_populations(results):
    return [
        r for r in results
        if r.converged and r.hierarchy is not None and r.hierarchy.complete and is_transitive(r.hierarchy)
    ]


def summarize_by_rank(results) -> np.ndarray | None:
    """Mean final aggressiveness per rank over populations with a linear hierarchy.

    Returns ``None`` when no population qualifies.
    """
    linear = linear_populations(results)
    if not linear:
        return None
    by_rank = []
    for r in linear:
        order = [block[0] for block in condense(r.hierarchy).blocks]
        by_rank.append([r.aggressiveness[a] for a in order])
    return np.mean(np.array(by_rank), axis=0)


def rank_linearity_profile(hierarchies) -> np.ndarray:
    hierarchies = list(hierarchies)
    if not hierarchies:
        raise ValueError("need at least one hierarchy")
    return np.array([rank_linearity(hierarchies, r) for r in range(hierarchies[0].n_agents)])


def census(results) -> dict:
    """Distinct-hierarchy census over converged populations."""
    converged = [r.hierarchy for r in results if r.converged and r.hierarchy is not None and r.hierarchy.complete]
    distinct = {h.edges: h for h in converged}
    counts = Counter(h.edges for h in converged)
    return {
        "n_populations": len(results),
        "n_converged": len(converged),
        "distinct": count_distinct(converged) if converged else 0,
        "intransitive": sum(not is_transitive(h) for h in distinct.values()),
        "most_common": max(counts.values()) if counts else 0,
    }


def pilot_sweep(base: EmergenceConfig, learning_rates, n_populations: int = 5, n_jobs: int = 1):
    """Short emergence runs per learning rate to pick one for the tabular learner.

    Rates are ranked by converged fraction, then transitive fraction, then
    fewer generations. Returns ``(best_rate, rows)``.
    """
    rows = []
    for lr in learning_rates:
        cfg = replace(base, n_populations=n_populations, hyper=replace(base.hyper, learning_rate=lr))
        results = run_emergence(cfg, n_jobs)
        conv = [r for r in results if r.converged]
        rows.append({
            "learning_rate": lr,
            "converged_fraction": len(conv) / len(results),
            "transitive_fraction": len(linear_populations(results)) / len(conv) if conv else 0.0,
            "mean_generations": float(np.mean([r.n_generations for r in results])),
        })
    best = max(rows, key=lambda r: (r["converged_fraction"], r["transitive_fraction"], -r["mean_generations"]))
    return best["learning_rate"], rows
