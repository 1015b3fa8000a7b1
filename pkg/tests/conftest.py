import numpy as np
import pytest

from swarmroute import FailureModel, SwarmSnapshot, build_network_pfsa


def grown_snapshot(n, r_c, rng, spread=(0.55, 0.95), sep=0.48, n_targets=1):
    """Connected-by-construction random placement with bounded degree.

    Each new agent lands within radio range of an existing one but no
    closer than sep * r_c to anybody, which keeps the neighborhood sizes
    small enough for fast measure percolation at theta = epsilon / m^2.
    """
    pos = [np.zeros(2)]
    for _ in range(n - 1):
        cand = pos[-1]
        for _ in range(300):
            anchor = pos[int(rng.integers(len(pos)))]
            ang = rng.uniform(0.0, 2.0 * np.pi)
            rad = rng.uniform(*spread) * r_c
            cand = anchor + rad * np.array([np.cos(ang), np.sin(ang)])
            d = np.linalg.norm(np.asarray(pos) - cand, axis=1)
            if np.min(d) > sep * r_c:
                break
        pos.append(cand)
    targets = frozenset(int(t) for t in rng.choice(n, size=n_targets, replace=False))
    return SwarmSnapshot(positions=np.asarray(pos), target_ids=targets, r_c=r_c)


@pytest.fixture
def chain_net():
    """3-agent chain A - B - Target with lambda = 0.1 on every link."""
    pos = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    snap = SwarmSnapshot(positions=pos, target_ids=frozenset({2}), r_c=1.1)
    return build_network_pfsa(snap, model=FailureModel(0.1, 0.1))


@pytest.fixture
def two_agent_net():
    """Agent 0 with the target as its only neighbor, failure-free link."""
    pos = np.array([[0.0, 0.0], [1.0, 0.0]])
    snap = SwarmSnapshot(positions=pos, target_ids=frozenset({1}), r_c=1.5)
    return build_network_pfsa(snap, model=FailureModel(0.0, 0.0))


def random_stochastic(rng, n):
    raw = rng.random((n, n)) + 1e-3
    return raw / raw.sum(axis=1, keepdims=True)


def random_sa_matrix(rng, n, n_absorbing=1, max_self_loop=0.9):
    """Random DAG feeding absorbing sinks, with random self-loops."""
    pi = np.zeros((n, n))
    absorbing = list(range(n - n_absorbing, n))
    for a in absorbing:
        pi[a, a] = 1.0
    for i in range(n - n_absorbing):
        later = np.arange(i + 1, n)
        k = int(rng.integers(1, min(3, later.size) + 1))
        dests = rng.choice(later, size=k, replace=False)
        self_loop = rng.random() * max_self_loop
        weights = rng.random(k) + 0.05
        weights = (1.0 - self_loop) * weights / weights.sum()
        pi[i, i] = self_loop
        for d, w in zip(dests, weights):
            pi[i, d] += w
    return pi
