import numpy as np
import pytest

from chicken_coop.game import Action
from chicken_coop.metrics import DominanceDigraph
from chicken_coop.policy import (
    AgentTrainState,
    PolicyTable,
    PpoHyperparams,
    TransitionBatch,
    surrogate_gradient,
    surrogate_objective,
)


def perfect_matchings(items):
    """All perfect matchings of ``items`` by recursion; independent of the sampler."""
    items = list(items)
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    for k, partner in enumerate(rest):
        remaining = rest[:k] + rest[k + 1:]
        for m in perfect_matchings(remaining):
            yield ((first, partner),) + m


def fixed_policy(n_contexts, action, strength=50.0):
    logits = np.zeros((n_contexts, 2))
    logits[:, action] = strength
    return PolicyTable(logits, np.zeros(n_contexts))


def cyclic_sample():
    """4 on top, then the cycle 1 -> 3 -> 5 -> 1, then 0, then 2."""
    order_blocks = [[4], [1, 3, 5], [0], [2]]
    edges = {(1, 3), (3, 5), (5, 1)}
    for a, upper in enumerate(order_blocks):
        for lower in order_blocks[a + 1:]:
            edges |= {(d, s) for d in upper for s in lower}
    return DominanceDigraph(6, frozenset(edges))


def sample_populations():
    """Four sample populations: three linear orders and the cyclic third one."""
    return [
        DominanceDigraph.from_order([2, 0, 5, 1, 4, 3]),
        DominanceDigraph.from_order([3, 1, 0, 4, 5, 2]),
        cyclic_sample(),
        DominanceDigraph.from_order([5, 4, 2, 3, 0, 1]),
    ]


def random_batch(rng, n_contexts=6, size=None):
    size = size or int(rng.integers(1, 64))
    return TransitionBatch(
        context=rng.integers(0, n_contexts, size),
        action=rng.integers(0, 2, size),
        reward=rng.choice([5.0, 0.0, -2.0, -10.0], size),
        old_action_probability=rng.uniform(0.05, 0.95, size),
    )


def flat(policy):
    return np.concatenate([policy.logits.ravel(), policy.bias])


def with_flat(policy, theta):
    n = policy.n_contexts
    return PolicyTable(theta[: 2 * n].reshape(n, 2), policy.values, theta[2 * n:])


def ratios(policy, batch):
    z = policy.effective_logits()[batch.context]
    p = np.exp(z - z.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    return p[np.arange(len(batch)), batch.action] / batch.old_action_probability


def fd_gradient(policy, batch, adv, hyper, step=1e-6):
    theta = flat(policy)
    g = np.zeros_like(theta)
    for k in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[k] += step
        down[k] -= step
        g[k] = (surrogate_objective(with_flat(policy, up), batch, adv, hyper)
                - surrogate_objective(with_flat(policy, down), batch, adv, hyper)) / (2 * step)
    return g


def max_fd_relative_error(n_batches, seed):
    rng = np.random.default_rng(seed)
    worst, done = 0.0, 0
    while done < n_batches:
        hyper = PpoHyperparams(clip_epsilon=0.3, entropy_coefficient=float(rng.choice([0.0, 0.05])))
        policy = PolicyTable(rng.normal(0, 1, (6, 2)), np.zeros(6), rng.normal(0, 0.5, 2))
        batch = random_batch(rng)
        rho = ratios(policy, batch)
        if np.min(np.abs(np.concatenate([rho - 0.7, rho - 1.3]))) < 1e-4:
            continue
        adv = rng.normal(0, 5, len(batch))
        g_logits, g_bias = surrogate_gradient(policy, batch, adv, hyper)
        analytic = np.concatenate([g_logits.ravel(), g_bias])
        numeric = fd_gradient(policy, batch, adv, hyper)
        scale = max(np.abs(analytic).max(), np.abs(numeric).max())
        if scale > 0:
            worst = max(worst, np.abs(analytic - numeric).max() / scale)
        done += 1
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def hawk_policy():
    return lambda n: AgentTrainState(fixed_policy(n, Action.HAWK))


ACCEPTANCE_LINES = []


def report(criterion, checks):
    """Print one PASS/FAIL line for an acceptance criterion, then assert every check."""
    ok = all(passed for passed, _ in checks.values())
    detail = "; ".join(f"{name}={value}" for name, (_, value) in checks.items())
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    failed = [name for name, (passed, _) in checks.items() if not passed]
    assert not failed, f"criterion {criterion} failed checks: {failed} ({detail})"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
