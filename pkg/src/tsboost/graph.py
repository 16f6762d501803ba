"""Weighted graphs viewed as the linear operators B (incidence) and W (weights).

Demands, flows and potentials are plain float arrays:

* a demand ``d`` has one entry per vertex,
* a flow ``f`` has one entry per edge, signed relative to the canonical
  orientation (lower vertex index -> higher vertex index),
* potentials ``phi`` have one entry per vertex.

B is never materialized; products with B and B^T are single streaming passes
over the edge list.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DisconnectedGraph,
    ImproperDemand,
    NonpositiveWeight,
    SelfLoop,
)

PROPER_RTOL = 1e-9

Demand = np.ndarray
Flow = np.ndarray
Potentials = np.ndarray


class WeightedGraph:
    """Undirected graph with positive edge weights and a fixed edge orientation.

    Vertices are ``0 .. n-1``. Each edge is stored as ``(tail, head, weight)``
    with ``tail < head``; endpoints given in the other order are swapped at
    construction. Parallel edges are allowed, self-loops are not.
    """

    __slots__ = ("n", "tails", "heads", "weights", "_adjacency")

    def __init__(self, n: int, edges: Iterable[Sequence[float]]):
        n = int(n)
        if n < 1:
            raise ValueError("a graph needs at least one vertex")
        edges = list(edges)
        tails = np.empty(len(edges), dtype=np.int64)
        heads = np.empty(len(edges), dtype=np.int64)
        weights = np.empty(len(edges), dtype=float)
        for i, (u, v, w) in enumerate(edges):
            u, v, w = int(u), int(v), float(w)
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge {i} endpoint out of range: ({u}, {v})")
            if u == v:
                raise SelfLoop(f"edge {i} is a self-loop at vertex {u}")
            if not np.isfinite(w) or w <= 0:
                raise NonpositiveWeight(f"edge {i} has weight {w}")
            tails[i], heads[i] = min(u, v), max(u, v)
            weights[i] = w
        for arr in (tails, heads, weights):
            arr.flags.writeable = False
        self.n = n
        self.tails = tails
        self.heads = heads
        self.weights = weights
        self._adjacency = None

    @property
    def m(self) -> int:
        return len(self.weights)

    def edges(self):
        """Iterate ``(tail, head, weight)`` triples in edge-index order."""
        return zip(self.tails.tolist(), self.heads.tolist(), self.weights.tolist())

    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Per-vertex lists of ``(neighbor, edge_index)``."""
        if self._adjacency is None:
            adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n)]
            for e, (u, v) in enumerate(zip(self.tails.tolist(), self.heads.tolist())):
                adj[u].append((v, e))
                adj[v].append((u, e))
            self._adjacency = adj
        return self._adjacency

    def subgraph(self, edge_indices) -> "WeightedGraph":
        idx = np.asarray(edge_indices, dtype=np.int64)
        return WeightedGraph(
            self.n, zip(self.tails[idx].tolist(), self.heads[idx].tolist(), self.weights[idx].tolist())
        )

    def __eq__(self, other):
        if not isinstance(other, WeightedGraph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.tails, other.tails)
            and np.array_equal(self.heads, other.heads)
            and np.array_equal(self.weights, other.weights)
        )

    def __hash__(self):
        return hash((self.n, self.tails.tobytes(), self.heads.tobytes(), self.weights.tobytes()))

    def __repr__(self):
        return f"WeightedGraph(n={self.n}, m={self.m})"


@dataclass(frozen=True, eq=False)
class TransshipmentInstance:
    graph: WeightedGraph
    demand: np.ndarray

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def m(self) -> int:
        return self.graph.m


def _vector(values, length: int, what: str) -> np.ndarray:
    if type(values) is np.ndarray and values.dtype == np.float64 and values.shape == (length,):
        return values
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != length:
        raise DimensionMismatch(f"{what} has shape {arr.shape}, expected ({length},)")
    return arr


def max_abs(x) -> float:
    """``||x||_inf`` (0 for an empty vector)."""
    x = np.asarray(x, dtype=float)
    return float(np.abs(x).max()) if x.size else 0.0


def is_proper(demand, rtol: float = PROPER_RTOL) -> bool:
    d = np.asarray(demand, dtype=float)
    scale = float(np.max(np.abs(d))) if d.size else 0.0
    return abs(float(np.sum(d))) <= rtol * scale


def validate_instance(graph: WeightedGraph, demand) -> TransshipmentInstance:
    d = _vector(demand, graph.n, "demand")
    if not np.all(np.isfinite(d)):
        raise ValueError("demand has non-finite entries")
    if np.any(graph.weights <= 0):
        raise NonpositiveWeight("graph has a nonpositive weight")
    if not is_proper(d):
        raise ImproperDemand(f"demand sums to {float(np.sum(d))!r}, not 0")
    d = d.copy()
    d.flags.writeable = False
    return TransshipmentInstance(graph, d)


def apply_incidence(graph: WeightedGraph, flow) -> np.ndarray:
    """Return ``B f``: flow leaving each vertex minus flow entering it."""
    f = _vector(flow, graph.m, "flow")
    return np.bincount(graph.tails, f, graph.n) - np.bincount(graph.heads, f, graph.n)


def apply_incidence_transpose(graph: WeightedGraph, potentials) -> np.ndarray:
    """Return ``B^T phi``: ``phi(tail) - phi(head)`` for every edge."""
    phi = _vector(potentials, graph.n, "potentials")
    return phi[graph.tails] - phi[graph.heads]


def flow_cost(graph: WeightedGraph, flow) -> float:
    f = _vector(flow, graph.m, "flow")
    return float(graph.weights @ np.abs(f))


def dual_objective(demand, potentials) -> float:
    d = np.asarray(demand, dtype=float)
    phi = np.asarray(potentials, dtype=float)
    if d.shape != phi.shape:
        raise DimensionMismatch(f"demand {d.shape} vs potentials {phi.shape}")
    return float(np.dot(d, phi))


def dual_infeasibility(graph: WeightedGraph, potentials) -> float:
    """``||W^{-1} B^T phi||_inf``; potentials are feasible iff this is <= 1."""
    if graph.m == 0:
        _vector(potentials, graph.n, "potentials")
        return 0.0
    return float(np.max(np.abs(apply_incidence_transpose(graph, potentials)) / graph.weights))


def unit_edge_demand(graph: WeightedGraph, e: int) -> np.ndarray:
    """Demand of one unit from the tail of edge ``e`` to its head (column e of B)."""
    d = np.zeros(graph.n)
    d[graph.tails[e]] = 1.0
    d[graph.heads[e]] = -1.0
    return d


class _DisjointSets:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def connected_components(graph: WeightedGraph) -> np.ndarray:
    """Component label per vertex, labels numbered by first appearance."""
    sets = _DisjointSets(graph.n)
    for u, v in zip(graph.tails.tolist(), graph.heads.tolist()):
        sets.union(u, v)
    roots = [sets.find(v) for v in range(graph.n)]
    relabel: dict[int, int] = {}
    return np.array([relabel.setdefault(r, len(relabel)) for r in roots], dtype=np.int64)


def minimum_spanning_tree(graph: WeightedGraph) -> np.ndarray:
    """Kruskal; ties are broken by the smaller edge index."""
    order = np.argsort(graph.weights, kind="stable")
    sets = _DisjointSets(graph.n)
    chosen = []
    tails, heads = graph.tails, graph.heads
    for e in order.tolist():
        if sets.union(int(tails[e]), int(heads[e])):
            chosen.append(e)
            if len(chosen) == graph.n - 1:
                break
    if len(chosen) != graph.n - 1:
        raise DisconnectedGraph(
            f"graph has {graph.n} vertices but a spanning forest of only {len(chosen)} edges"
        )
    return np.sort(np.array(chosen, dtype=np.int64))
