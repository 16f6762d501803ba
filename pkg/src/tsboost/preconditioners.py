"""Approximate preconditioners: spanning trees and linear cost approximators.

A spanning tree T of G with stretch s (every edge (u, v) of G has
``dist_T(u, v) <= s * w(u, v)``) gives an s-approximate primal-dual
preconditioner: solve the demand exactly on T and reuse the tree flow and the
tree potentials on G.

A linear cost approximator P (``||d||_OPT <= ||P d||_1 <= alpha ||d||_OPT``)
gives a dual-only preconditioner through ``phi(d) = P^T sign(P d)``. The
approximator built here averages randomly shifted quadtrees over an l1
embedding of the vertices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .errors import (
    CertificateUnbounded,
    DegenerateEmbedding,
    DimensionMismatch,
    ImproperDemand,
    NotSpanning,
    ParseError,
)
from .graph import WeightedGraph, is_proper, minimum_spanning_tree
from .handles import PreconditionerHandle, PreconditionerOutput


class SpanningTree:
    """A spanning tree of ``graph`` rooted at ``root``, set up for O(n) solves.

    Vertices are laid out in DFS preorder so that every subtree is a
    contiguous block; subtree demand sums and root-to-vertex potential sums
    then become prefix sums.
    """

    def __init__(self, graph: WeightedGraph, tree_edges, root: int = 0):
        tree_edges = np.unique(np.asarray(tree_edges, dtype=np.int64))
        n = graph.n
        if len(tree_edges) != n - 1:
            raise NotSpanning(f"a spanning tree on {n} vertices needs {n - 1} edges, got {len(tree_edges)}")
        if np.any(tree_edges < 0) or np.any(tree_edges >= graph.m):
            raise NotSpanning("tree edge index out of range")
        adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for e in tree_edges.tolist():
            u, v = int(graph.tails[e]), int(graph.heads[e])
            adj[u].append((v, e))
            adj[v].append((u, e))

        parent = np.full(n, -1, dtype=np.int64)
        parent_edge = np.full(n, -1, dtype=np.int64)
        depth = np.zeros(n, dtype=np.int64)
        preorder = []
        seen = np.zeros(n, dtype=bool)
        stack = [root]
        seen[root] = True
        while stack:
            v = stack.pop()
            preorder.append(v)
            for u, e in reversed(adj[v]):
                if not seen[u]:
                    seen[u] = True
                    parent[u] = v
                    parent_edge[u] = e
                    depth[u] = depth[v] + 1
                    stack.append(u)
        if len(preorder) != n:
            raise NotSpanning("tree edges do not connect all vertices")

        preorder = np.array(preorder, dtype=np.int64)
        position = np.empty(n, dtype=np.int64)
        position[preorder] = np.arange(n)
        size = np.ones(n, dtype=np.int64)
        for v in preorder[::-1].tolist():
            if parent[v] >= 0:
                size[parent[v]] += size[v]

        self.graph = graph
        self.root = int(root)
        self.tree_edges = tree_edges
        self.parent = parent
        self.parent_edge = parent_edge
        self.depth = depth
        self.preorder = preorder
        self.position = position
        self.size = size
        children = np.flatnonzero(parent >= 0)
        self._children = children
        # each subtree occupies preorder positions [start, stop)
        self._start = position[children]
        self._stop = self._start + size[children]
        self._child_edges = parent_edge[children]
        self._child_weights = graph.weights[self._child_edges]
        # +1 where the child is the canonical tail of its parent edge
        self._child_sign = np.where(graph.tails[self._child_edges] == children, 1.0, -1.0)
        weighted = np.zeros(n)
        for v in preorder.tolist():
            if parent[v] >= 0:
                weighted[v] = weighted[parent[v]] + graph.weights[parent_edge[v]]
        self.weighted_depth = weighted
        self._stretch: Optional[float] = None

    def subtree_demand(self, demand) -> np.ndarray:
        """Net demand inside the subtree of every non-root vertex (order of ``_children``)."""
        d = np.asarray(demand, dtype=float)
        prefix = np.zeros(len(d) + 1)
        np.cumsum(d[self.preorder], out=prefix[1:])
        return prefix[self._stop] - prefix[self._start]

    def route(self, demand) -> np.ndarray:
        """The unique flow on tree edges routing ``demand`` (zero off the tree)."""
        net = self.subtree_demand(demand)
        flow = np.zeros(self.graph.m)
        flow[self._child_edges] = self._child_sign * net
        return flow

    def solve(self, demand) -> PreconditionerOutput:
        """Optimal primal-dual pair of the tree instance.

        Across each tree edge the potential drops by its weight in the
        direction the flow travels; edges without flow get no drop.
        """
        d = np.asarray(demand, dtype=float)
        net = self.subtree_demand(d)
        flow = np.zeros(self.graph.m)
        flow[self._child_edges] = self._child_sign * net
        step = self._child_weights * np.sign(net)
        # each vertex collects the steps of all its ancestors-or-self
        n = self.graph.n
        marks = np.bincount(self._start, step, n + 1) - np.bincount(self._stop, step, n + 1)
        phi = np.cumsum(marks[:-1])[self.position]
        phi -= phi.min()
        return PreconditionerOutput(phi, flow)

    def layout(self):
        """Arrays describing the tree solve, in the order the compiled loop takes them."""
        return (self.preorder, self.position, self._start, self._stop,
                self._child_edges, self._child_sign, self._child_weights)

    def lca(self, u, v) -> np.ndarray:
        u = np.array(u, dtype=np.int64, copy=True)
        v = np.array(v, dtype=np.int64, copy=True)
        swap = self.depth[u] < self.depth[v]
        u[swap], v[swap] = v[swap], u[swap].copy()
        up = self._lifting()
        diff = self.depth[u] - self.depth[v]
        for k, table in enumerate(up):
            jump = ((diff >> k) & 1).astype(bool)
            u[jump] = table[u[jump]]
        for table in reversed(up):
            move = table[u] != table[v]
            u[move] = table[u[move]]
            v[move] = table[v[move]]
        return np.where(u == v, u, self._lifting()[0][u])

    def _lifting(self):
        if not hasattr(self, "_up"):
            first = np.where(self.parent >= 0, self.parent, np.arange(self.graph.n))
            up = [first]
            for _ in range(max(1, int(self.depth.max()).bit_length())):
                up.append(up[-1][up[-1]])
            self._up = up
        return self._up

    def distance(self, u, v) -> np.ndarray:
        a = self.lca(u, v)
        wd = self.weighted_depth
        return wd[np.asarray(u)] + wd[np.asarray(v)] - 2.0 * wd[a]

    @property
    def stretch(self) -> float:
        """``max_e dist_T(u, v) / w(e)`` over all edges of the graph (at least 1)."""
        if self._stretch is None:
            g = self.graph
            if g.m == 0:
                self._stretch = 1.0
            else:
                ratios = self.distance(g.tails, g.heads) / g.weights
                self._stretch = max(1.0, float(ratios.max()))
        return self._stretch


TreeEmbedding = SpanningTree


def mst_tree(graph: WeightedGraph, root: int = 0) -> SpanningTree:
    return SpanningTree(graph, minimum_spanning_tree(graph), root)


def tree_solve(tree: SpanningTree, graph: WeightedGraph, demand) -> PreconditionerOutput:
    if tree.graph is not graph and tree.graph != graph:
        raise DimensionMismatch("tree was built on a different graph")
    d = np.asarray(demand, dtype=float)
    if d.shape != (graph.n,):
        raise DimensionMismatch(f"demand has shape {d.shape}, expected ({graph.n},)")
    if not is_proper(d):
        raise ImproperDemand(f"demand sums to {float(d.sum())!r}")
    return tree.solve(d)


def tree_stretch(graph: WeightedGraph, tree_edges) -> float:
    return SpanningTree(graph, tree_edges).stretch


def tree_preconditioner(graph: WeightedGraph, tree: Optional[SpanningTree] = None) -> PreconditionerHandle:
    """Primal-dual handle solving on a spanning tree; ``alpha`` is the measured stretch."""
    if tree is None:
        tree = mst_tree(graph)
    elif tree.graph is not graph and tree.graph != graph:
        raise NotSpanning("tree was built on a different graph")
    return PreconditionerHandle(tree.solve, alpha=tree.stretch, dual_only=False, name="tree", tree=tree)


# ---------------------------------------------------------------------------
# linear cost approximators


@dataclass(frozen=True, eq=False)
class EmbeddedInstance:
    """Vertices of ``graph`` placed in l1 space so that
    ``dist_G(u, v) <= |x_u - x_v|_1 <= distortion * dist_G(u, v)``."""

    graph: WeightedGraph
    coordinates: np.ndarray
    distortion: float

    @property
    def dimension(self) -> int:
        return self.coordinates.shape[1]


def _l1_distances(points: np.ndarray) -> np.ndarray:
    return np.abs(points[:, None, :] - points[None, :, :]).sum(axis=2)


def embed_coordinates(graph: WeightedGraph, coordinates) -> EmbeddedInstance:
    """Rescale raw coordinates so l1 distances dominate graph distances, and
    measure the resulting distortion exactly (all-pairs shortest paths)."""
    x = np.asarray(coordinates, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] != graph.n or x.shape[1] < 1:
        raise DimensionMismatch(f"coordinates have shape {x.shape}, expected ({graph.n}, k)")
    if not np.all(np.isfinite(x)):
        raise ValueError("coordinates must be finite")
    if graph.n == 1:
        return EmbeddedInstance(graph, x.copy(), 1.0)
    dist_g = dijkstra(_adjacency_matrix(graph), directed=False)
    dist_x = _l1_distances(x)
    off = ~np.eye(graph.n, dtype=bool)
    if np.any(dist_x[off] == 0):
        raise DegenerateEmbedding("distinct vertices share a coordinate")
    ratio = dist_g[off] / dist_x[off]
    if not np.all(np.isfinite(ratio)):
        raise DegenerateEmbedding("graph is disconnected; graph distances are infinite")
    hi, lo = float(ratio.max()), float(ratio.min())
    return EmbeddedInstance(graph, x * hi, hi / lo)


def _adjacency_matrix(graph: WeightedGraph):
    # keep the lightest of any parallel edges
    order = np.lexsort((graph.weights, graph.heads, graph.tails))
    t, h, w = graph.tails[order], graph.heads[order], graph.weights[order]
    keep = np.ones(len(t), dtype=bool)
    keep[1:] = (t[1:] != t[:-1]) | (h[1:] != h[:-1])
    return sp.csr_matrix((w[keep], (t[keep], h[keep])), shape=(graph.n, graph.n))


@dataclass(eq=False)
class CostApproximator:
    """Sparse ``P = diag(row_coefficients) @ rows`` with 0/1 ``rows`` over vertices."""

    rows: sp.csr_matrix
    row_coefficients: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows = sp.csr_matrix(self.rows)
        self.row_coefficients = np.asarray(self.row_coefficients, dtype=float)
        if self.rows.shape[0] != len(self.row_coefficients):
            raise DimensionMismatch("one coefficient per row is required")
        if np.any(self.row_coefficients < 0):
            raise ValueError("row coefficients must be nonnegative")
        self._matrix = None

    @property
    def n(self) -> int:
        return self.rows.shape[1]

    @property
    def matrix(self) -> sp.csr_matrix:
        if self._matrix is None:
            self._matrix = sp.csr_matrix(sp.diags(self.row_coefficients) @ self.rows)
        return self._matrix

    def apply(self, demand) -> np.ndarray:
        d = np.asarray(demand, dtype=float)
        if d.shape != (self.n,):
            raise DimensionMismatch(f"demand has shape {d.shape}, expected ({self.n},)")
        return self.matrix @ d

    def estimate(self, demand) -> float:
        """``||P d||_1``."""
        return float(np.abs(self.apply(demand)).sum())

    def scaled(self, factor: float) -> "CostApproximator":
        return CostApproximator(self.rows, self.row_coefficients * factor, dict(self.info))


def _quadtree_rows(points: np.ndarray, scales, offsets):
    """Cells of nested shifted grids: one row per occupied cell and level, plus
    one row per occupied top cell for sending it to a common point.

    Every cell is charged its own l1 diameter ``k * scale``. Two points first
    sharing a cell of side ``W`` are separated in all finer levels, so the
    tree distance is at least ``2 k W / 2``, their l1 distance bound.
    """
    n, k = points.shape
    row_ids, cols, coefs = [], [], []
    n_rows = 0
    s = len(offsets)
    for offset in offsets:
        shifted = points - offset
        for level, scale in enumerate(scales):
            cells = np.floor(shifted / scale).astype(np.int64)
            _, label = np.unique(cells, axis=0, return_inverse=True)
            label = label.reshape(-1)
            count = int(label.max()) + 1
            row_ids.append(n_rows + label)
            cols.append(np.arange(n))
            coefs.append(np.full(count, k * scale / s))
            n_rows += count
        # the coarsest cells are all sent to one common point
        row_ids.append(n_rows + label)
        cols.append(np.arange(n))
        coefs.append(np.full(count, k * scales[-1] / s))
        n_rows += count
    rows = sp.csr_matrix(
        (np.ones(sum(len(c) for c in cols)), (np.concatenate(row_ids), np.concatenate(cols))),
        shape=(n_rows, n),
    )
    return rows, np.concatenate(coefs)


def build_grid_approximator(
    embedded: EmbeddedInstance,
    s: Optional[int] = None,
    L: Optional[int] = None,
    seed: int = 0,
    validate: bool = True,
    validation_demands: int = 16,
) -> CostApproximator:
    """Average of ``s`` randomly shifted quadtrees over the embedded points.

    Level 0 has cells of side ``base`` small enough that no two distinct
    points share a cell; each further level doubles the side. A shift is a
    uniform offset in ``[0, 1)^k`` times the top scale, shared by all levels
    of one quadtree so the cells nest.

    With ``validate`` the lower bound ``||P d||_1 >= ||d||_OPT`` is checked
    against the exact solver (all unit edge demands plus random demands).
    Failing shift draws are replaced up to 8 times, after which the
    coefficients are multiplied by the largest observed deficit.
    """
    x = embedded.coordinates
    n, k = x.shape
    info = {"k": k, "seed": int(seed), "growth": 2.0}
    if n == 1:
        rows = sp.csr_matrix(np.ones((1, 1)))
        info.update(levels=0, grids=1, base=0.0)
        return CostApproximator(rows, np.zeros(1), info)
    dist = _l1_distances(x)
    off = ~np.eye(n, dtype=bool)
    positive = dist[off][dist[off] > 0]
    if positive.size == 0:
        raise DegenerateEmbedding("all points coincide")
    diameter = float(positive.max())
    base = float(positive.min()) / max(2, k)
    if L is None:
        L = math.ceil(math.log2(diameter / base)) + 1
    if s is None:
        s = math.ceil(math.log2(n)) + 1
    if s < 1 or L < 1:
        raise ValueError("need at least one grid and one level")
    scales = base * 2.0 ** np.arange(L)
    info.update(levels=int(L), grids=int(s), base=base)
    rng = np.random.default_rng(seed)

    def draw():
        offsets = rng.random((s, k)) * scales[-1]
        rows, coefs = _quadtree_rows(x, scales, offsets)
        return CostApproximator(rows, coefs, dict(info))

    approx = draw()
    if not validate:
        return approx
    checks = _validation_demands(embedded.graph, validation_demands, rng)
    for attempt in range(9):
        deficit = _lower_bound_deficit(approx, checks)
        if deficit <= 1.0:
            approx.info["resamples"] = attempt
            return approx
        if attempt < 8:
            approx = draw()
    approx = approx.scaled(deficit)
    approx.info.update(resamples=8, deficit_scale=deficit)
    return approx


def _validation_demands(graph: WeightedGraph, count: int, rng):
    from .exact import solve_demand

    checks = []
    if graph.m:
        # a unit edge demand costs exactly the shortest path between its endpoints
        ends = np.unique(graph.tails)
        dist = dijkstra(_adjacency_matrix(graph), directed=False, indices=ends)
        row = np.searchsorted(ends, graph.tails)
        for e in range(graph.m):
            d = np.zeros(graph.n)
            d[graph.tails[e]], d[graph.heads[e]] = 1.0, -1.0
            checks.append((d, float(dist[row[e], graph.heads[e]])))
    for _ in range(count):
        d = rng.integers(-10, 11, graph.n).astype(float)
        d[rng.integers(graph.n)] -= d.sum()
        checks.append((d, solve_demand(graph, d).opt_cost))
    return checks


def _lower_bound_deficit(approx: CostApproximator, checks) -> float:
    worst = 1.0
    for d, opt in checks:
        est = approx.estimate(d)
        if opt > 0 and est < opt * (1.0 - 1e-12):
            worst = max(worst, opt / est if est > 0 else math.inf)
    return worst


def approximator_alpha_certificate(P: CostApproximator, graph: WeightedGraph) -> float:
    """``max_e ||P d_e||_1 / w(e)``: the largest column l1-norm of ``P B W^-1``."""
    if P.n != graph.n:
        raise DimensionMismatch(f"approximator has {P.n} columns, graph has {graph.n} vertices")
    if graph.m == 0:
        return 0.0
    M = P.matrix.tocsc()
    cols = M[:, graph.tails] - M[:, graph.heads]
    norms = np.asarray(abs(cols).sum(axis=0)).ravel()
    return float(np.max(norms / graph.weights))


def approximator_dual(P: CostApproximator, demand) -> np.ndarray:
    """``P^T sign(P d)`` with ``sign(0) = 0``."""
    y = np.sign(P.apply(demand))
    return P.matrix.T @ y


def approximator_preconditioner(P: CostApproximator, graph: WeightedGraph) -> PreconditionerHandle:
    alpha = approximator_alpha_certificate(P, graph)
    if not math.isfinite(alpha):
        raise CertificateUnbounded(f"approximator certificate is {alpha!r}")
    if alpha <= 0:
        raise CertificateUnbounded("approximator annihilates every edge demand; it cannot bound any cost")

    def query(demand):
        return PreconditionerOutput(approximator_dual(P, demand))

    return PreconditionerHandle(query, alpha=alpha, dual_only=True, name="grid")


def grid_preconditioner(graph: WeightedGraph, coordinates, seed: int = 0, **kwargs) -> PreconditionerHandle:
    embedded = embed_coordinates(graph, coordinates)
    return approximator_preconditioner(build_grid_approximator(embedded, seed=seed, **kwargs), graph)


# ---------------------------------------------------------------------------
# sparse triplet text format


def format_approximator(P: CostApproximator) -> str:
    coo = P.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = ["c tsboost cost approximator"]
    for key in sorted(P.info):
        lines.append(f"c {key} {P.info[key]!r}")
    lines.append(f"p approx {P.matrix.shape[0]} {P.n} {coo.nnz}")
    for i in order.tolist():
        lines.append(f"{coo.row[i] + 1} {coo.col[i] + 1} {float(coo.data[i])!r}")
    return "\n".join(lines) + "\n"


def parse_approximator(text: str) -> CostApproximator:
    """Inverse of :func:`format_approximator`. Rows come back with unit
    coefficients folded into the entries."""
    shape = None
    rows, cols, vals = [], [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split()
        if not parts or parts[0] == "c":
            continue
        if parts[0] == "p":
            if len(parts) != 5 or parts[1] != "approx":
                raise ParseError("expected 'p approx <rows> <n> <nnz>'", lineno)
            shape = (int(parts[2]), int(parts[3]))
            continue
        if shape is None:
            raise ParseError("triplet before header", lineno)
        if len(parts) != 3:
            raise ParseError("expected '<row> <vertex> <value>'", lineno)
        try:
            rows.append(int(parts[0]) - 1)
            cols.append(int(parts[1]) - 1)
            vals.append(float(parts[2]))
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    if shape is None:
        raise ParseError("missing header", 1)
    M = sp.csr_matrix((vals, (rows, cols)), shape=shape)
    return CostApproximator(M, np.ones(shape[0]))


def save_approximator(P: CostApproximator, path) -> None:
    Path(path).write_text(format_approximator(P))


def load_approximator(path) -> CostApproximator:
    return parse_approximator(Path(path).read_text())
