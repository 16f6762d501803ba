"""Plain-text instance, solution and coordinate files.

Vertices are 1-indexed in files and 0-indexed in memory; the conversion
happens here and nowhere else. Instance files look like::

    c optional comments
    p ts <n> <m>
    e <u> <v> <w>          (m lines)
    d <v> <value>          (unlisted vertices have demand 0)

Writing normalizes: edges sorted by ``(u, v, w)``, nonzero demands sorted by
vertex, numbers printed with at most 12 significant digits.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ParseError
from .graph import TransshipmentInstance, WeightedGraph, flow_cost, validate_instance


def fmt(x: float) -> str:
    """Canonical decimal text for a number (12 significant digits, no ``-0``)."""
    x = float(x)
    if x == 0.0:
        return "0"
    return "%.12g" % x


def _number(token: str, line: int, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"bad {what} {token!r}", line) from None
    if not np.isfinite(value):
        raise ParseError(f"{what} must be finite, got {token!r}", line)
    return value


def _vertex(token: str, n: int, line: int) -> int:
    try:
        v = int(token)
    except ValueError:
        raise ParseError(f"bad vertex {token!r}", line) from None
    if not 1 <= v <= n:
        raise ParseError(f"vertex {v} outside 1..{n}", line)
    return v - 1


def _lines(text: str):
    """Yield ``(line_number, tokens)`` for non-blank, non-comment lines."""
    for i, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split()
        if tokens and tokens[0] != "c":
            yield i, tokens


def parse_instance_text(text: str) -> TransshipmentInstance:
    lines = list(_lines(text))
    if not lines or lines[0][1][:2] != ["p", "ts"]:
        first = lines[0][0] if lines else 1
        raise ParseError('missing header "p ts <n> <m>"', first)
    lineno, header = lines[0]
    if len(header) != 4:
        raise ParseError('header must be "p ts <n> <m>"', lineno)
    try:
        n, m = int(header[2]), int(header[3])
    except ValueError:
        raise ParseError("header counts must be integers", lineno) from None
    if n < 1 or m < 0:
        raise ParseError(f"invalid sizes n={n}, m={m}", lineno)

    edges = []
    demand = np.zeros(n)
    for lineno, tokens in lines[1:]:
        kind = tokens[0]
        if kind == "e":
            if len(tokens) != 4:
                raise ParseError('edge line must be "e <u> <v> <w>"', lineno)
            u, v = _vertex(tokens[1], n, lineno), _vertex(tokens[2], n, lineno)
            w = _number(tokens[3], lineno, "weight")
            if u == v:
                raise ParseError(f"self-loop at vertex {u + 1}", lineno)
            if w <= 0:
                raise ParseError(f"weight must be positive, got {tokens[3]}", lineno)
            edges.append((u, v, w))
        elif kind == "d":
            if len(tokens) != 3:
                raise ParseError('demand line must be "d <v> <value>"', lineno)
            demand[_vertex(tokens[1], n, lineno)] += _number(tokens[2], lineno, "demand")
        elif kind == "p":
            raise ParseError("duplicate header", lineno)
        else:
            raise ParseError(f"unknown line type {kind!r}", lineno)
    if len(edges) != m:
        raise ParseError(f"header announces {m} edges, found {len(edges)}", lines[0][0])
    return validate_instance(WeightedGraph(n, edges), demand)


def parse_instance(path) -> TransshipmentInstance:
    return parse_instance_text(Path(path).read_text())


def normalize_instance(instance: TransshipmentInstance) -> TransshipmentInstance:
    """Sorted edges and numbers rounded to what the text format keeps."""
    return parse_instance_text(format_instance(instance))


def format_instance(instance: TransshipmentInstance, comments=()) -> str:
    g = instance.graph
    out = [f"c {c}" for c in comments]
    out.append(f"p ts {g.n} {g.m}")
    weights = [float(fmt(w)) for w in g.weights]
    order = sorted(range(g.m), key=lambda e: (int(g.tails[e]), int(g.heads[e]), weights[e]))
    for e in order:
        out.append(f"e {g.tails[e] + 1} {g.heads[e] + 1} {fmt(weights[e])}")
    for v, value in enumerate(instance.demand):
        if fmt(value) != "0":
            out.append(f"d {v + 1} {fmt(value)}")
    return "\n".join(out) + "\n"


def write_instance(instance: TransshipmentInstance, path, comments=()) -> None:
    Path(path).write_text(format_instance(instance, comments))


@dataclass(frozen=True, eq=False)
class Solution:
    flow: np.ndarray
    potentials: np.ndarray
    cost: float
    dual: float


def format_solution(graph: WeightedGraph, flow, potentials, demand) -> str:
    """One ``f`` line per edge (in edge order), one ``phi`` line per vertex, then the trailer."""
    flow = np.asarray(flow, dtype=float)
    phi = np.asarray(potentials, dtype=float)
    out = [f"f {u + 1} {v + 1} {fmt(x)}" for u, v, x in zip(graph.tails.tolist(), graph.heads.tolist(), flow)]
    out += [f"phi {v + 1} {fmt(x)}" for v, x in enumerate(phi)]
    out.append(f"cost {fmt(flow_cost(graph, flow))}")
    out.append(f"dual {fmt(float(np.dot(demand, phi)))}")
    return "\n".join(out) + "\n"


def parse_solution_text(text: str, graph: WeightedGraph) -> Solution:
    flows, phis = [], []
    cost = dual = None
    for lineno, tokens in _lines(text):
        kind = tokens[0]
        if kind == "f" and len(tokens) == 4:
            e = len(flows)
            if e >= graph.m:
                raise ParseError("more flow lines than edges", lineno)
            u, v = _vertex(tokens[1], graph.n, lineno), _vertex(tokens[2], graph.n, lineno)
            if (min(u, v), max(u, v)) != (int(graph.tails[e]), int(graph.heads[e])):
                raise ParseError(f"flow line does not match edge {e + 1}", lineno)
            value = _number(tokens[3], lineno, "flow")
            flows.append(value if u < v else -value)
        elif kind == "phi" and len(tokens) == 3:
            v = _vertex(tokens[1], graph.n, lineno)
            if v != len(phis):
                raise ParseError(f"potential for vertex {v + 1} out of order", lineno)
            phis.append(_number(tokens[2], lineno, "potential"))
        elif kind == "cost" and len(tokens) == 2:
            cost = _number(tokens[1], lineno, "cost")
        elif kind == "dual" and len(tokens) == 2:
            dual = _number(tokens[1], lineno, "dual")
        else:
            raise ParseError(f"unrecognized solution line {' '.join(tokens)!r}", lineno)
    if len(flows) != graph.m or len(phis) != graph.n or cost is None or dual is None:
        raise ParseError("incomplete solution file")
    return Solution(np.array(flows), np.array(phis), cost, dual)


def parse_solution(path, graph: WeightedGraph) -> Solution:
    return parse_solution_text(Path(path).read_text(), graph)


def format_coordinates(coords) -> str:
    x = np.atleast_2d(np.asarray(coords, dtype=float))
    out = [f"p coords {x.shape[0]} {x.shape[1]}"]
    out += [f"v {i + 1} " + " ".join(fmt(c) for c in row) for i, row in enumerate(x)]
    return "\n".join(out) + "\n"


def parse_coordinates_text(text: str) -> np.ndarray:
    lines = list(_lines(text))
    if not lines or lines[0][1][:2] != ["p", "coords"] or len(lines[0][1]) != 4:
        raise ParseError('missing header "p coords <n> <k>"', lines[0][0] if lines else 1)
    lineno, header = lines[0]
    try:
        n, k = int(header[2]), int(header[3])
    except ValueError:
        raise ParseError("header counts must be integers", lineno) from None
    if n < 1 or k < 1:
        raise ParseError(f"invalid sizes n={n}, k={k}", lineno)
    coords = np.full((n, k), np.nan)
    for lineno, tokens in lines[1:]:
        if tokens[0] != "v" or len(tokens) != k + 2:
            raise ParseError(f'coordinate line must be "v <vertex> x1 .. x{k}"', lineno)
        v = _vertex(tokens[1], n, lineno)
        coords[v] = [_number(t, lineno, "coordinate") for t in tokens[2:]]
    missing = np.flatnonzero(np.isnan(coords).any(axis=1))
    if len(missing):
        raise ParseError(f"no coordinates for vertex {missing[0] + 1}")
    return coords


def parse_coordinates(path) -> np.ndarray:
    return parse_coordinates_text(Path(path).read_text())


def coordinates_path(instance_path) -> Path:
    """Sidecar location used by default: ``<instance>.coords``."""
    p = Path(instance_path)
    return p.with_name(p.name + ".coords")


def read_optional_coordinates(instance_path, explicit=None) -> Optional[np.ndarray]:
    path = Path(explicit) if explicit else coordinates_path(instance_path)
    if explicit or path.exists():
        return parse_coordinates(path)
    return None
