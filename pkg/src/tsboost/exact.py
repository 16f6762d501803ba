"""Exact transshipment by successive shortest paths.

Every undirected edge is a pair of opposite arcs with infinite capacity. A
super-source feeds the surplus vertices and a super-sink drains the deficit
vertices. Each augmentation runs Dijkstra on reduced costs, so the node
potentials maintained along the way are, at the end, an optimal dual.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .errors import DisconnectedDemand, ImproperDemand
from .handles import PreconditionerHandle, PreconditionerOutput
from .graph import (
    TransshipmentInstance,
    WeightedGraph,
    apply_incidence,
    connected_components,
    is_proper,
)

ZERO_DEMAND_ATOL = 1e-12


@dataclass(frozen=True, eq=False)
class ExactSolution:
    opt_cost: float
    flow: np.ndarray
    potentials: np.ndarray


def _arc_table(graph: WeightedGraph, flow: np.ndarray, pi: np.ndarray):
    """Cheapest residual arc for every ordered vertex pair, with its reduced cost.

    An edge carrying flow against an arc direction offers a cancelling arc of
    cost ``-w`` (capacity ``|f|``); otherwise the arc costs ``+w``.
    """
    t, h, w = graph.tails, graph.heads, graph.weights
    m = graph.m
    fwd_cost = np.where(flow < 0, -w, w)   # tail -> head
    bwd_cost = np.where(flow > 0, -w, w)   # head -> tail
    src = np.concatenate([t, h])
    dst = np.concatenate([h, t])
    cost = np.concatenate([fwd_cost, bwd_cost]) + pi[src] - pi[dst]
    np.maximum(cost, 0.0, out=cost)
    edge = np.concatenate([np.arange(m), np.arange(m)])
    order = np.lexsort((cost, dst, src))
    src, dst, cost, edge = src[order], dst[order], cost[order], edge[order]
    keep = np.ones(len(src), dtype=bool)
    keep[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
    return src[keep], dst[keep], cost[keep], edge[keep]


def _solve(graph: WeightedGraph, demand: np.ndarray) -> ExactSolution:
    n, m = graph.n, graph.m
    d = np.asarray(demand, dtype=float)
    flow = np.zeros(m)
    if float(np.max(np.abs(d), initial=0.0)) <= ZERO_DEMAND_ATOL:
        return ExactSolution(0.0, flow, np.zeros(n))

    scale = float(np.max(np.abs(d)))
    comp = connected_components(graph)
    net = np.bincount(comp, d)
    if len(net) > 1 and np.any(np.abs(net) > 1e-9 * scale):
        c = int(np.argmax(np.abs(net)))
        raise DisconnectedDemand(f"component {c} has net demand {net[c]!r}")

    tol = 1e-13 * scale
    supply = np.where(d > 0, d, 0.0)
    deficit = np.where(d < 0, -d, 0.0)
    S, T = n, n + 1
    pi = np.zeros(n + 2)

    while True:
        sources = np.flatnonzero(supply > tol)
        sinks = np.flatnonzero(deficit > tol)
        if len(sources) == 0 or len(sinks) == 0:
            break
        src, dst, cost, edge = _arc_table(graph, flow, pi[:n])
        s_cost = np.maximum(pi[S] - pi[sources], 0.0)
        t_cost = np.maximum(pi[sinks] - pi[T], 0.0)
        rows = np.concatenate([src, np.full(len(sources), S), sinks])
        cols = np.concatenate([dst, sources, np.full(len(sinks), T)])
        vals = np.concatenate([cost, s_cost, t_cost])
        residual = sp.csr_matrix((vals, (rows, cols)), shape=(n + 2, n + 2))
        dist, pred = dijkstra(residual, directed=True, indices=S, return_predecessors=True)
        if not np.isfinite(dist[T]):
            raise DisconnectedDemand("remaining surplus cannot reach any deficit vertex")

        # walk the path back from the super-sink
        path = [T]
        while path[-1] != S:
            path.append(int(pred[path[-1]]))
        path.reverse()
        first, last = path[1], path[-2]
        amount = min(supply[first], deficit[last])
        keys = src * (n + 2) + dst
        hops = []
        for a, b in zip(path[1:-2], path[2:-1]):
            e = int(edge[np.searchsorted(keys, a * (n + 2) + b)])
            forward = a == graph.tails[e]
            cancelling = (flow[e] < 0) if forward else (flow[e] > 0)
            if cancelling:
                amount = min(amount, abs(flow[e]))
            hops.append((e, forward, cancelling))
        for e, forward, cancelling in hops:
            if cancelling and abs(flow[e]) <= amount:
                flow[e] = 0.0  # exact cancellation, no rounding residue
            elif forward:
                flow[e] += amount
            else:
                flow[e] -= amount
        supply[first] -= amount
        deficit[last] -= amount

        reach = dist[T]
        pi += np.minimum(dist, reach)

    phi = -pi[:n]
    phi = phi - phi.min()
    return ExactSolution(float(np.dot(graph.weights, np.abs(flow))), flow, phi)


def exact_transshipment(instance: TransshipmentInstance) -> ExactSolution:
    """Optimal flow, optimal potentials and ``||d||_OPT`` for a validated instance."""
    if not is_proper(instance.demand):
        raise ImproperDemand("demand does not sum to zero")
    return _solve(instance.graph, instance.demand)


def opt_cost(instance: TransshipmentInstance) -> float:
    return exact_transshipment(instance).opt_cost


def solve_demand(graph: WeightedGraph, demand) -> ExactSolution:
    """Exact solve for a raw demand vector (properness checked, not enforced exactly)."""
    d = np.asarray(demand, dtype=float)
    if not is_proper(d, rtol=1e-7):
        raise ImproperDemand(f"demand sums to {float(d.sum())!r}")
    return _solve(graph, d)


def residual_norm(graph: WeightedGraph, demand, flow) -> float:
    """``||d - B f||_OPT``, the cheapest way to route what ``flow`` leaves unrouted."""
    return solve_demand(graph, np.asarray(demand, dtype=float) - apply_incidence(graph, flow)).opt_cost


def exact_preconditioner(graph: WeightedGraph) -> PreconditionerHandle:
    """The exact solver as a 1-approximate primal-dual preconditioner."""

    def query(demand):
        sol = _solve(graph, demand)
        return PreconditionerOutput(sol.potentials, sol.flow)

    return PreconditionerHandle(query, alpha=1.0, dual_only=False, name="exact")
