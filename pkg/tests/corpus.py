"""Seeded random corpora shared by the unit and acceptance tests."""

import numpy as np


def random_collection(rng, n=None, q=None, size=None):
    """A multi-collection of q-sets with skewed coordinate popularity so kernels appear."""
    n = int(rng.integers(8, 65)) if n is None else n
    q = int(rng.integers(2, 5)) if q is None else q
    size = int(np.exp(rng.uniform(0, np.log(2001)))) - 1 if size is None else size
    if rng.random() < 0.3:
        weights = np.ones(n)
    else:
        weights = rng.pareto(rng.uniform(0.3, 2.0), size=n) + 1e-3
    # Gumbel top-q: weighted sampling without replacement, one row per set
    keys = np.log(weights) + rng.gumbel(size=(size, n))
    top = np.argpartition(-keys, q - 1, axis=1)[:, :q] if size else np.zeros((0, q), dtype=int)
    return [sorted(int(i) for i in row) for row in top], n, q


def collection_corpus(count=500, seed=2024):
    rng = np.random.default_rng(seed)
    return [random_collection(rng) for _ in range(count)]


def random_bounded_graph(rng, m=None, max_degree=None):
    """Random simple graph on m vertices with maximum degree at most max_degree."""
    m = int(rng.integers(1, 201)) if m is None else m
    cap = int(rng.integers(0, 9)) if max_degree is None else max_degree
    adj = [set() for _ in range(m)]
    if m > 1 and cap > 0:
        for _ in range(int(rng.integers(0, cap * m))):
            u, v = (int(a) for a in rng.integers(m, size=2))
            if u != v and len(adj[u]) < cap and len(adj[v]) < cap:
                adj[u].add(v)
                adj[v].add(u)
    return adj


def graph_corpus(count=500, seed=7):
    rng = np.random.default_rng(seed)
    return [random_bounded_graph(rng) for _ in range(count)]
