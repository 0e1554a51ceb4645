import itertools

import numpy as np
import pytest

from persistency.model import GraphicalModel, energy, grid_edges, random_model
from persistency.verification import partial_submodularity_gaps


def chain_edges(n):
    return [(k, k + 1) for k in range(n - 1)]


def cycle_edges(n):
    return chain_edges(n) + [(0, n - 1)]


def tiny_graph(kind, rng):
    if kind == "chain":
        n = int(rng.integers(2, 6))
        return n, chain_edges(n)
    if kind == "cycle":
        n = int(rng.integers(3, 6))
        return n, cycle_edges(n)
    if kind == "grid22":
        return 4, grid_edges(2, 2)
    if kind == "grid23":
        return 6, grid_edges(2, 3)
    raise ValueError(kind)


KINDS = ("chain", "cycle", "grid22", "grid23")


def tiny_instance(rng, kind=None, family=None, labels=(2, 3), cost_range=(-10, 10)):
    """Random integer model on a small graph with 2 or 3 labels per node."""
    kind = kind or KINDS[int(rng.integers(len(KINDS)))]
    family = family or ("potts", "full")[int(rng.integers(2))]
    n, edges = tiny_graph(kind, rng)
    if family == "potts":
        k = int(rng.integers(labels[0], labels[1] + 1))
        ks = [k] * n
    else:
        ks = [int(rng.integers(labels[0], labels[1] + 1)) for _ in range(n)]
    return random_model(ks, edges, family, cost_range, rng)


def random_labeling(f, rng):
    return tuple(int(rng.integers(k)) for k in f.labels)


def random_subset_to_one(f, y, rng, density=0.5):
    from persistency.substitution import SubsetToOne

    elim = [sorted(i for i in range(k) if i != yv and rng.random() < density) for k, yv in zip(f.labels, y)]
    return SubsetToOne(tuple(y), elim)


def dominant_model(labels, edges, y, gap=10.0):
    """Zero pairwise costs and unaries with a unique minimum at ``y``."""
    unary = [np.where(np.arange(k) == yv, 0.0, gap) for k, yv in zip(labels, y)]
    pairwise = [np.zeros((labels[u], labels[v])) for u, v in edges]
    return GraphicalModel(tuple(labels), tuple(edges), unary, pairwise)


def zero_model(labels, edges):
    return GraphicalModel(
        tuple(labels), tuple(edges), [np.zeros(k) for k in labels],
        [np.zeros((labels[u], labels[v])) for u, v in edges],
    )


def check_reduced_structure(r):
    """Every identity of the reduced costs, evaluated exactly."""
    f, g, y = r.source, r.base, r.y
    assert g.constant == 0.0
    for v in range(f.n_nodes):
        m = r.masks[v]
        assert np.array_equal(g.unary[v][m], f.unary[v][m] - f.unary[v][y[v]])
        assert np.all(g.unary[v][~m] == 0)
    for e, (u, v) in enumerate(f.edges):
        t, gb = f.pairwise[e], g.pairwise[e]
        mu, mv = r.masks[u], r.masks[v]
        assert np.all(gb[np.ix_(~mu, ~mv)] == 0)
        for i in np.flatnonzero(mu):
            d = min(t[i, j] - t[y[u], j] for j in np.flatnonzero(~mv))
            assert r.delta_tail[e][i] == d
            assert np.all(gb[i, ~mv] == d)
        for j in np.flatnonzero(mv):
            d = min(t[i, j] - t[i, y[v]] for i in np.flatnonzero(~mu))
            assert r.delta_head[e][j] == d
            assert np.all(gb[~mu, j] == d)
        for i, j in itertools.product(np.flatnonzero(mu), np.flatnonzero(mv)):
            expect = min(t[i, j] - t[y[u], y[v]], r.delta_tail[e][i] + r.delta_head[e][j])
            assert gb[i, j] == expect
    assert partial_submodularity_gaps(r) >= 0
    assert energy(g, y) == 0


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
