from __future__ import annotations

import itertools

import numpy as np
from hypothesis import strategies as st

from tsboost.graph import WeightedGraph, validate_instance


def random_connected_graph(n: int, m: int, rng, max_weight: int = 20) -> WeightedGraph:
    """Random spanning tree plus extra random edges (parallel edges allowed)."""
    edges = [(int(rng.integers(v)), v, int(rng.integers(1, max_weight + 1))) for v in range(1, n)]
    while len(edges) < m:
        u, v = rng.choice(n, size=2, replace=False)
        edges.append((int(u), int(v), int(rng.integers(1, max_weight + 1))))
    return WeightedGraph(n, edges)


def random_proper_demand(n: int, rng, bound: int = 10) -> np.ndarray:
    d = rng.integers(-bound, bound + 1, size=n).astype(float)
    d[int(rng.integers(n))] -= d.sum()
    return d


def random_instance(n: int, m: int, seed: int):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(n, m, rng)
    return validate_instance(g, random_proper_demand(n, rng))


def path_graph(n: int, w: float = 1.0) -> WeightedGraph:
    return WeightedGraph(n, [(i, i + 1, w) for i in range(n - 1)])


def cycle4() -> WeightedGraph:
    return WeightedGraph(4, [(0, 1, 1), (1, 2, 1), (2, 3, 1), (0, 3, 1)])


@st.composite
def graphs(draw, min_n: int = 2, max_n: int = 12):
    n = draw(st.integers(min_n, max_n))
    extra = draw(st.integers(0, 2 * n))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    return random_connected_graph(n, n - 1 + extra, rng)


@st.composite
def instances(draw, min_n: int = 2, max_n: int = 12):
    g = draw(graphs(min_n, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    return validate_instance(g, random_proper_demand(g.n, np.random.default_rng(seed)))


def grid_graph(side: int):
    idx = lambda r, c: r * side + c  # noqa: E731
    edges = []
    for r in range(side):
        for c in range(side):
            if c + 1 < side:
                edges.append((idx(r, c), idx(r, c + 1), 1.0))
            if r + 1 < side:
                edges.append((idx(r, c), idx(r + 1, c), 1.0))
    coords = np.array([(r, c) for r in range(side) for c in range(side)], dtype=float)
    return WeightedGraph(side * side, edges), coords


def floyd_warshall(graph: WeightedGraph) -> np.ndarray:
    n = graph.n
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    for u, v, w in graph.edges():
        dist[u, v] = dist[v, u] = min(dist[u, v], w)
    for k in range(n):
        dist = np.minimum(dist, dist[:, k, None] + dist[None, k, :])
    return dist


def brute_force_opt(graph: WeightedGraph, demand) -> float:
    """Optimal cost by enumerating every pairing of unit supplies with unit
    deficits; an integral optimum decomposes into unit shortest paths."""
    dist = floyd_warshall(graph)
    d = np.rint(np.asarray(demand)).astype(int)
    sources = [v for v in range(graph.n) for _ in range(max(d[v], 0))]
    sinks = [v for v in range(graph.n) for _ in range(max(-d[v], 0))]
    best = 0.0 if not sources else np.inf
    for perm in itertools.permutations(sinks):
        best = min(best, sum(dist[s, t] for s, t in zip(sources, perm)))
    return float(best)


def lp_opt(graph: WeightedGraph, demand) -> float:
    """Optimal cost from HiGHS on the split-variable LP min W(f+ + f-), B(f+ - f-) = d."""
    from scipy.optimize import linprog
    from scipy.sparse import csr_matrix, hstack

    m = graph.m
    B = csr_matrix(
        (np.r_[np.ones(m), -np.ones(m)], (np.r_[graph.tails, graph.heads], np.r_[np.arange(m), np.arange(m)])),
        shape=(graph.n, m),
    )
    res = linprog(np.r_[graph.weights, graph.weights], A_eq=hstack([B, -B]), b_eq=demand,
                  bounds=(0, None), method="highs")
    assert res.status == 0, res.message
    return float(res.fun)
