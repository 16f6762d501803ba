"""Seeded random instances: connected graphs with integer demands in [-10, 10]."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InfeasibleShape
from .graph import TransshipmentInstance, WeightedGraph, validate_instance

KINDS = ("random", "geometric", "cycle")
MAX_WEIGHT = 20
DEMAND_BOUND = 10
GRID_SIDE = 100


@dataclass(frozen=True, eq=False)
class GeneratedInstance:
    instance: TransshipmentInstance
    coordinates: Optional[np.ndarray] = None


def random_demand(n: int, rng, bound: int = DEMAND_BOUND) -> np.ndarray:
    """Integer entries in ``[-bound, bound]`` nudged one unit at a time until they sum to 0."""
    d = rng.integers(-bound, bound + 1, size=n)
    total = int(d.sum())
    while total != 0:
        step = -1 if total > 0 else 1
        movable = np.flatnonzero(d + step <= bound) if step > 0 else np.flatnonzero(d + step >= -bound)
        v = int(rng.choice(movable))
        d[v] += step
        total += step
    return d.astype(float)


def _check_shape(nodes: int, edges: int) -> None:
    if nodes < 1:
        raise InfeasibleShape(f"need at least one vertex, got {nodes}")
    if edges < nodes - 1:
        raise InfeasibleShape(f"{edges} edges cannot connect {nodes} vertices")
    if edges > nodes * (nodes - 1) // 2:
        raise InfeasibleShape(f"{edges} edges exceed the {nodes * (nodes - 1) // 2} vertex pairs")


def _random_tree(n: int, rng) -> list[tuple[int, int]]:
    order = rng.permutation(n)
    return [(int(order[i]), int(order[rng.integers(i)])) for i in range(1, n)]


def _fill_pairs(n: int, pairs: set, target: int, rng) -> None:
    if target - len(pairs) > n * (n - 1) // 4:
        # dense request: sample from the complement instead of rejection sampling
        rest = [(u, v) for u in range(n) for v in range(u + 1, n) if (u, v) not in pairs]
        pick = rng.choice(len(rest), size=target - len(pairs), replace=False)
        pairs.update(rest[i] for i in sorted(pick.tolist()))
        return
    while len(pairs) < target:
        u, v = (int(x) for x in rng.choice(n, size=2, replace=False))
        pairs.add((min(u, v), max(u, v)))


def _canonical(pairs) -> list[tuple[int, int]]:
    return sorted((min(u, v), max(u, v)) for u, v in pairs)


def random_graph(nodes: int, edges: int, rng) -> WeightedGraph:
    pairs = set(_canonical(_random_tree(nodes, rng)))
    _fill_pairs(nodes, pairs, edges, rng)
    pairs = sorted(pairs)
    weights = rng.integers(1, MAX_WEIGHT + 1, size=len(pairs))
    return WeightedGraph(nodes, [(u, v, int(w)) for (u, v), w in zip(pairs, weights)])


def cycle_graph(nodes: int, edges: int, rng) -> WeightedGraph:
    pairs = {(i, i + 1) for i in range(nodes - 1)}
    if edges >= nodes and nodes >= 3:
        pairs.add((0, nodes - 1))
    _fill_pairs(nodes, pairs, edges, rng)
    pairs = sorted(pairs)
    weights = rng.integers(1, MAX_WEIGHT + 1, size=len(pairs))
    return WeightedGraph(nodes, [(u, v, int(w)) for (u, v), w in zip(pairs, weights)])


def geometric_graph(nodes: int, edges: int, rng):
    """Distinct integer points in the plane, edges weighted by l1 distance.

    Each vertex first links to its nearest earlier vertex; the remaining edges
    are the shortest unused pairs.
    """
    side = max(GRID_SIDE, int(np.ceil(np.sqrt(4 * nodes))))
    cells = rng.choice(side * side, size=nodes, replace=False)
    pts = np.stack([cells // side, cells % side], axis=1).astype(float)
    dist = np.abs(pts[:, None, :] - pts[None, :, :]).sum(axis=2)
    pairs = set()
    for i in range(1, nodes):
        j = int(np.argmin(dist[i, :i]))
        pairs.add((j, i))
    if len(pairs) < edges:
        iu, ju = np.triu_indices(nodes, 1)
        order = np.lexsort((ju, iu, dist[iu, ju]))
        for k in order.tolist():
            if len(pairs) >= edges:
                break
            pairs.add((int(iu[k]), int(ju[k])))
    pairs = sorted(pairs)
    graph = WeightedGraph(nodes, [(u, v, dist[u, v]) for u, v in pairs])
    return graph, pts


def generate(nodes: int, edges: int, seed: int = 0, kind: str = "random") -> GeneratedInstance:
    """Deterministic under ``seed``; always connected and always valid."""
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    _check_shape(nodes, edges)
    rng = np.random.default_rng(seed)
    coords = None
    if kind == "random":
        graph = random_graph(nodes, edges, rng)
    elif kind == "cycle":
        graph = cycle_graph(nodes, edges, rng)
    else:
        graph, coords = geometric_graph(nodes, edges, rng)
    demand = random_demand(nodes, rng)
    return GeneratedInstance(validate_instance(graph, demand), coords)
