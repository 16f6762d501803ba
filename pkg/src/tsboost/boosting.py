"""Boosting an alpha-approximate preconditioner to a (1 + eps)-approximate solver.

For a fixed guess ``g`` the feasibility form of multiplicative weights is run
with ``A = W^-1 B^T``, ``b = -d / g`` and ``gamma = 0``: a point ``phi`` with
``||A phi||_inf + <b, phi> <= 0`` is a dual certificate for ``OPT >= g``. The
oracle player answers the weights ``p`` by querying the preconditioner on the
residual demand ``d - B (g W^-1 p)``; when that residual is cheap the candidate
flow ``g W^-1 p`` (plus the routed residual, if available) certifies
``OPT <= (1 + eps) g`` instead.

``binary_search_solve`` wraps the fixed-guess loop in a multiplicative
bisection, ``reduce_residual`` repeats the dual-only solve on what is left
unrouted, and ``full_solve`` repairs the last tiny residual on the MST.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import NonPositiveGuess, PreconditionerContractViolation
from .graph import (
    TransshipmentInstance,
    WeightedGraph,
    apply_incidence,
    apply_incidence_transpose,
    flow_cost,
    max_abs,
    minimum_spanning_tree,
)
from .handles import PreconditionerHandle
from .mw import Failed, LinearizedQuery, MwConfig, OracleFailure, Solved, feasibility_mw
from .preconditioners import SpanningTree

PRIMAL_DUAL = "primal_dual"
DUAL_ONLY = "dual_only"
MODES = (PRIMAL_DUAL, DUAL_ONLY)

ZERO_DEMAND_ATOL = 1e-12
CONTRACT_RTOL = 1e-9
FEASIBILITY_RTOL = 1e-6
MAX_GUESSES = 500
GUESS_ACCURACY = 0.8


@dataclass(frozen=True)
class GuessState:
    g: float
    lower: float
    upper: float

    def __post_init__(self):
        if not (self.lower <= self.g <= self.upper):
            raise ValueError(f"guess {self.g!r} outside bracket [{self.lower!r}, {self.upper!r}]")

    @property
    def ratio(self) -> float:
        return self.upper / self.lower if self.lower > 0 else math.inf


@dataclass(frozen=True, eq=False)
class DualCertificate:
    """Feasible potentials with ``<d, phi> = value >= g``."""

    phi: np.ndarray
    value: float
    rounds: int = 0


@dataclass(frozen=True, eq=False)
class FlowCertificate:
    """A flow and, in dual-only mode, the demand it leaves unrouted.

    Primal-dual mode: ``B flow = d`` and ``cost <= (1 + eps) g``.
    Dual-only mode: ``cost <= g`` and ``||residual||_OPT <= residual_bound <= eps g``.
    Either way ``cost + residual_bound`` is a certified upper bound on OPT.
    """

    flow: np.ndarray
    residual: Optional[np.ndarray]
    cost: float
    rounds: int = 0
    residual_bound: float = 0.0

    @property
    def upper_bound(self) -> float:
        return self.cost + self.residual_bound


BoostOutcome = Union[DualCertificate, FlowCertificate]


@dataclass(eq=False)
class SolveReport:
    flow: np.ndarray
    potentials: np.ndarray
    primal_cost: float
    dual_value: float
    preconditioner_calls: int = 0
    rounds_per_guess: list = field(default_factory=list)
    guesses_tried: list = field(default_factory=list)
    wall_time: float = 0.0
    residual: Optional[np.ndarray] = None
    brackets: list = field(default_factory=list)


def _check_mode(mode: str, handle: PreconditionerHandle) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == PRIMAL_DUAL and handle.dual_only:
        raise ValueError(f"preconditioner {handle.name!r} is dual-only; use mode={DUAL_ONLY!r}")


def _check_epsilon(epsilon: float, upper: float = 1.0) -> None:
    if not (0.0 < epsilon <= upper):
        raise ValueError(f"epsilon must lie in (0, {upper}], got {epsilon!r}")


def _is_zero(d: np.ndarray) -> bool:
    return max_abs(d) <= ZERO_DEMAND_ATOL


def round_bound(epsilon: float, alpha: float, m: int) -> int:
    """Rounds of one fixed-guess run: ``ceil(4 eps^-2 alpha^2 ln(2m))``."""
    return MwConfig(epsilon, alpha, max(m, 1)).feasibility_rounds


def _spot_check(graph: WeightedGraph, handle: PreconditionerHandle, demand, out, t: int):
    """Cheap checks of one preconditioner answer; returns ``(A phi, <d, phi>)``."""
    phi = np.asarray(out.potentials, dtype=float)
    if phi.shape != (graph.n,) or not np.all(np.isfinite(phi)):
        raise PreconditionerContractViolation(f"round {t}: {handle.name} returned malformed potentials")
    a_phi = apply_incidence_transpose(graph, phi) / graph.weights
    infeas = max_abs(a_phi)
    if infeas > handle.alpha * (1.0 + CONTRACT_RTOL):
        raise PreconditionerContractViolation(
            f"round {t}: {handle.name} potentials have infeasibility {infeas!r} > alpha = {handle.alpha!r}"
        )
    value = float(np.dot(demand, phi))
    if out.flow is not None:
        f = np.asarray(out.flow, dtype=float)
        scale = max(max_abs(demand), 1e-300)
        gap = max_abs(apply_incidence(graph, f) - demand)
        if gap > FEASIBILITY_RTOL * scale:
            raise PreconditionerContractViolation(f"round {t}: {handle.name} flow misses the demand by {gap!r}")
        cost = flow_cost(graph, f)
        if cost > value + CONTRACT_RTOL * max(cost, abs(value)) + 1e-12 * scale:
            raise PreconditionerContractViolation(
                f"round {t}: {handle.name} flow cost {cost!r} exceeds dual value {value!r}"
            )
    return phi, a_phi, value


class _RunningSums:
    """Running sums of the oracle's answers, plus the sums since the last
    power-of-two round (averages over the most recent half of the run)."""

    def __init__(self, n: int, m: int):
        self.phi = np.zeros(n)
        self.a_phi = np.zeros(m)
        self.flow = None
        self._mark = 1
        self._snap = (self.phi, self.a_phi, None)

    def add(self, t: int, phi, a_phi, flow) -> None:
        if t == 2 * self._mark:
            self._mark = t
            self._snap = (self.phi, self.a_phi, self.flow)
        self.phi = self.phi + phi
        self.a_phi = self.a_phi + a_phi
        if flow is not None:
            self.flow = flow.copy() if self.flow is None else self.flow + flow
        self.t = t

    def suffix_dual(self):
        return self.phi - self._snap[0], self.a_phi - self._snap[1]

    def flow_averages(self):
        # averages of flows routing the same demand still route it
        if self.flow is None or self.t < 2:
            return []
        out = [self.flow / self.t]
        if self._snap[2] is not None and self.t > self._mark:
            out.append((self.flow - self._snap[2]) / (self.t - self._mark + 1))
        return out


def _shrunk_flow(graph, d, flow, g, epsilon, t):
    """Turn a flow routing ``d`` with cost ``<= (1 + eps) g`` into a dual-only
    certificate: scaled by ``min(1, g / cost)`` it costs at most ``g`` and the
    unrouted part ``(1 - scale) d`` costs at most ``cost - g <= eps g``."""
    cost = flow_cost(graph, flow)
    if cost > (1.0 + epsilon) * g:
        return None
    if cost <= g:
        return FlowCertificate(flow, d - apply_incidence(graph, flow), cost, t, 0.0)
    shrunk = flow * (g / cost)
    return FlowCertificate(shrunk, d - apply_incidence(graph, shrunk), flow_cost(graph, shrunk), t, cost - g)


def boost_fixed_guess(
    instance: TransshipmentInstance,
    handle: PreconditionerHandle,
    g: float,
    epsilon: float,
    mode: str = PRIMAL_DUAL,
    early_stop: bool = True,
    trace: Optional[list] = None,
    round_cap: Optional[int] = None,
    compiled: bool = True,
) -> BoostOutcome:
    """Either certify ``OPT >= g`` with potentials or ``OPT <= (1 + eps) g`` with a flow.

    With ``early_stop`` the run also ends as soon as either certificate can be
    verified directly (the running potentials are already good enough after
    rescaling, or a cheap enough flow is in hand). ``trace`` collects one
    ``RoundRecord`` per completed MW round. Spanning-tree handles run a
    compiled copy of the same loop unless ``compiled`` is false or a trace
    is requested.
    """
    if not g > 0:
        raise NonPositiveGuess(f"guess must be positive, got {g!r}")
    _check_epsilon(epsilon)
    _check_mode(mode, handle)
    graph = instance.graph
    d = np.asarray(instance.demand, dtype=float)
    n, m = graph.n, graph.m
    if _is_zero(d):
        return FlowCertificate(np.zeros(m), np.zeros(n) if mode == DUAL_ONLY else None, 0.0, 0, 0.0)

    w = graph.weights
    config = MwConfig(epsilon, handle.alpha, max(m, 1), round_cap)
    tree = handle.tree
    if compiled and trace is None and tree is not None and (tree.graph is graph or tree.graph == graph):
        outcome = _compiled_fixed_guess(graph, tree, d, g, epsilon, mode, early_stop, config)
        if outcome is not None:
            return outcome
    sums = _RunningSums(n, m)
    cache = {"phi": None, "a_phi": None}

    def apply_A(phi):
        if phi is cache["phi"]:
            return cache["a_phi"]
        return apply_incidence_transpose(graph, phi) / w

    def dual_from(phi, a_phi, t):
        infeas = max_abs(a_phi)
        value = float(np.dot(d, phi))
        if infeas > 0 and value >= g * infeas:
            return DualCertificate(phi / infeas, value / infeas, t)
        return None

    def oracle(query: LinearizedQuery):
        t = query.round_index
        f_t = g * query.p / w
        d_res = d - apply_incidence(graph, f_t)
        out = handle(d_res)
        phi, a_phi, value = _spot_check(graph, handle, d_res, out, t)
        f_res = None if out.flow is None else np.asarray(out.flow, dtype=float)

        if mode == PRIMAL_DUAL:
            combined = f_t + f_res
            cost = flow_cost(graph, combined)
            if value < epsilon * g or (early_stop and cost <= (1.0 + epsilon) * g):
                return Failed(FlowCertificate(combined, None, cost, t))
        else:
            # <d_res, phi_res> and the cost of f_res both bound ||d_res||_OPT from above
            bound = value if f_res is None else min(value, flow_cost(graph, f_res))
            if value < epsilon * g or (early_stop and bound <= epsilon * g):
                return Failed(FlowCertificate(f_t, d_res, flow_cost(graph, f_t), t, bound))
            combined = None if f_res is None else f_t + f_res
            if early_stop and combined is not None:
                cert = _shrunk_flow(graph, d, combined, g, epsilon, t)
                if cert is not None:
                    return Failed(cert)

        sums.add(t, phi, a_phi, combined)
        if early_stop:
            # every candidate below is checked directly, so any of them is sound
            for cand_phi, cand_a in ((sums.phi, sums.a_phi), sums.suffix_dual(), (phi, a_phi)):
                cert = dual_from(cand_phi, cand_a, t)
                if cert is not None:
                    return Failed(cert)
            if combined is not None:
                for cand in sums.flow_averages():
                    if mode == PRIMAL_DUAL:
                        cost = flow_cost(graph, cand)
                        if cost <= (1.0 + epsilon) * g:
                            return Failed(FlowCertificate(cand, None, cost, t))
                    else:
                        cert = _shrunk_flow(graph, d, cand, g, epsilon, t)
                        if cert is not None:
                            return Failed(cert)
        cache["phi"], cache["a_phi"] = phi, a_phi
        return Solved(phi)

    result = feasibility_mw(oracle, apply_A, -d / g, 0.0, config, trace)
    if isinstance(result, OracleFailure):
        return result.payload
    rounds = config.feasibility_rounds
    phi = result.x
    a_phi = apply_incidence_transpose(graph, phi) / w
    infeas = max_abs(a_phi)
    if infeas > 0:
        phi = phi / infeas
    return DualCertificate(phi, float(np.dot(d, phi)), rounds)


def _compiled_fixed_guess(graph, tree, d, g, epsilon, mode, early_stop, config):
    """Run the compiled loop and re-verify its answer; ``None`` means "use the
    generic loop" (only when rounding made a recomputed check disagree)."""
    from . import _treeloop as loop

    code, t, phi, flow, bound = loop.fixed_guess_loop(
        graph.tails, graph.heads, graph.weights, d, float(g), float(epsilon), config.beta,
        config.feasibility_rounds, mode == DUAL_ONLY, bool(early_stop), *tree.layout(),
    )
    if code in (loop.DUAL, loop.DUAL_AVERAGE):
        infeas = max_abs(apply_incidence_transpose(graph, phi) / graph.weights)
        value = float(np.dot(d, phi))
        if code == loop.DUAL_AVERAGE:
            if infeas > 0:
                phi, value = phi / infeas, value / infeas
            return DualCertificate(phi, value, t)
        if infeas > 0 and value >= g * infeas:
            return DualCertificate(phi / infeas, value / infeas, t)
        return None
    if code == loop.FLOW:
        return FlowCertificate(flow, None, flow_cost(graph, flow), t)
    if code == loop.FLOW_RESIDUAL:
        return FlowCertificate(flow, d - apply_incidence(graph, flow), flow_cost(graph, flow), t, bound)
    return _shrunk_flow(graph, d, flow, g, epsilon, t)


def _mst_start(graph: WeightedGraph, d: np.ndarray):
    tree = SpanningTree(graph, minimum_spanning_tree(graph))
    out = tree.solve(d)
    return tree, out.flow, out.potentials / tree.stretch


def _final_flow(graph, d, flow, residual, lower, mode):
    if mode == DUAL_ONLY:
        cost = flow_cost(graph, flow)
        if cost > lower:
            # keep ||W f|| <= OPT; the part scaled away costs at most cost - lower
            flow = flow * (lower / cost)
            residual = d - apply_incidence(graph, flow)
    return flow, residual


def binary_search_solve(
    instance: TransshipmentInstance,
    handle: PreconditionerHandle,
    epsilon: float,
    mode: str = PRIMAL_DUAL,
    early_stop: bool = True,
    max_guesses: int = MAX_GUESSES,
    guess_accuracy: float = GUESS_ACCURACY,
    stop: Optional[Callable[[np.ndarray, np.ndarray], bool]] = None,
) -> SolveReport:
    """Bisect the guess until the certified bracket has ratio at most ``1 + eps``.

    Fixed-guess runs use ``guess_accuracy * eps`` so that the bracket can
    actually close. The bracket starts from the MST: its flow bounds OPT from
    above and its potentials, divided by the tree's stretch, from below.

    Primal-dual mode returns a feasible flow within ``(1 + eps)`` of OPT.
    Dual-only mode returns a flow of cost at most OPT whose residual demand
    costs at most ``eps * OPT`` to route.

    ``stop(potentials, flow)`` is asked after every guess, with the current
    best potentials and the flow that would be returned; a true answer ends
    the bisection before the bracket closes.
    """
    _check_epsilon(epsilon)
    _check_mode(mode, handle)
    if not 0.0 < guess_accuracy < 1.0:
        raise ValueError(f"guess_accuracy must lie in (0, 1), got {guess_accuracy!r}")
    start = time.perf_counter()
    graph = instance.graph
    d = np.asarray(instance.demand, dtype=float)
    n, m = graph.n, graph.m
    if _is_zero(d):
        return SolveReport(np.zeros(m), np.zeros(n), 0.0, 0.0, residual=np.zeros(n) if mode == DUAL_ONLY else None,
                           wall_time=time.perf_counter() - start)

    inner = guess_accuracy * epsilon
    _, best_flow, best_phi = _mst_start(graph, d)
    upper = flow_cost(graph, best_flow)
    lower = float(np.dot(d, best_phi))
    residual = None if mode == PRIMAL_DUAL else np.zeros(n)

    calls = 0
    rounds_per_guess: list[int] = []
    guesses: list[float] = []
    brackets = [(lower, upper)]
    while upper > (1.0 + epsilon) * lower:
        if len(guesses) >= max_guesses:
            raise RuntimeError(f"bracket [{lower!r}, {upper!r}] did not close within {max_guesses} guesses")
        # either outcome leaves the same bracket ratio
        g = math.sqrt(lower * upper / (1.0 + inner))
        outcome = boost_fixed_guess(instance, handle, g, inner, mode, early_stop)
        guesses.append(g)
        rounds_per_guess.append(outcome.rounds)
        calls += outcome.rounds
        if isinstance(outcome, DualCertificate):
            if outcome.value > lower:
                lower, best_phi = outcome.value, outcome.phi
        elif outcome.upper_bound < upper:
            upper, best_flow, residual = outcome.upper_bound, outcome.flow, outcome.residual
        brackets.append((lower, upper))
        if stop is not None and stop(best_phi, _final_flow(graph, d, best_flow, residual, lower, mode)[0]):
            break

    best_flow, residual = _final_flow(graph, d, best_flow, residual, lower, mode)
    return SolveReport(
        flow=best_flow,
        potentials=best_phi,
        primal_cost=flow_cost(graph, best_flow),
        dual_value=float(np.dot(d, best_phi)),
        preconditioner_calls=calls,
        rounds_per_guess=rounds_per_guess,
        guesses_tried=guesses,
        wall_time=time.perf_counter() - start,
        residual=residual,
        brackets=brackets,
    )


def residual_iterations(n: int, epsilon: float, C: float) -> int:
    """``ceil(C ln n / ln(2 / eps)) + 1`` solves shrink the residual below ``n^-C``."""
    return math.ceil(C * math.log(max(n, 1)) / math.log(2.0 / epsilon)) + 1


def _reduce(instance, handle, epsilon, C, early_stop=True, done=None):
    _check_epsilon(epsilon, 0.5)
    if not C > 0:
        raise ValueError(f"C must be positive, got {C!r}")
    graph = instance.graph
    d = np.asarray(instance.demand, dtype=float)
    total = np.zeros(graph.m)
    phi0 = np.zeros(graph.n)
    reports = []
    if _is_zero(d):
        return total, phi0, reports
    scale = float(np.max(np.abs(d)))
    remaining = d
    for i in range(residual_iterations(graph.n, epsilon, C)):
        if float(np.max(np.abs(remaining))) <= 1e-13 * scale:
            break
        sub = TransshipmentInstance(graph, remaining)
        stop = None
        if done is not None:
            if i == 0:
                stop = lambda phi, flow: done(flow, phi, 1.0 + epsilon)  # noqa: E731
            else:
                stop = lambda phi, flow, base=total: done(base + flow, phi0, 1.0 + 2.0 * epsilon)  # noqa: E731
        report = binary_search_solve(sub, handle, epsilon / 2.0, DUAL_ONLY, early_stop, stop=stop)
        reports.append(report)
        if i == 0:
            phi0 = report.potentials
        total = total + report.flow
        remaining = d - apply_incidence(graph, total)
        if done is not None and done(total, phi0, 1.0 + 2.0 * epsilon):
            break
    return total, phi0, reports


def reduce_residual(
    instance: TransshipmentInstance,
    handle: PreconditionerHandle,
    epsilon: float,
    C: float = 2.0,
):
    """Route the residual repeatedly; returns ``(f, phi)`` with ``||W f|| <= (1 + eps) OPT``
    and ``||d - B f||_OPT <= n^-C OPT``; ``phi`` is the first round's dual."""
    flow, phi, _ = _reduce(instance, handle, epsilon, C)
    return flow, phi


def route_on_tree_repair(graph: WeightedGraph, tree_edges, residual) -> np.ndarray:
    """Route ``residual`` exactly along the given spanning tree."""
    r = np.asarray(residual, dtype=float)
    if abs(float(np.sum(r))) > 1e-9 * max(1.0, float(np.max(np.abs(r), initial=0.0))):
        raise ValueError(f"residual sums to {float(np.sum(r))!r}")
    tree = SpanningTree(graph, tree_edges)
    return tree.route(r)


def full_solve(
    instance: TransshipmentInstance,
    handle: PreconditionerHandle,
    epsilon: float,
    C: float = 2.0,
    early_stop: bool = True,
) -> SolveReport:
    """Feasible flow within ``(1 + 2 eps)`` of OPT and potentials within ``(1 + eps)``.

    ``C`` is raised when ``n`` is too small for the MST repair (which may
    cost up to ``n - 1`` times the residual's OPT) to stay below ``eps OPT``.
    """
    start = time.perf_counter()
    graph = instance.graph
    n = graph.n
    d = np.asarray(instance.demand, dtype=float)
    C_eff = C if n < 2 else max(C, 1.0 + math.log(1.0 / epsilon) / math.log(n))
    tree = SpanningTree(graph, minimum_spanning_tree(graph)) if n > 1 else None

    def done(flow, phi0, factor):
        # <d, phi0> <= OPT, so a repaired flow within factor * <d, phi0> is certified;
        # factor 1 + eps also certifies the dual before the first bisection closes
        repaired = flow_cost(graph, flow) + flow_cost(graph, tree.route(d - apply_incidence(graph, flow)))
        return repaired <= factor * float(np.dot(d, phi0))

    flow, phi, reports = _reduce(instance, handle, epsilon, C_eff, early_stop, done if early_stop and tree else None)
    residual = d - apply_incidence(graph, flow)
    if tree is not None and not _is_zero(d):
        flow = flow + tree.route(residual)
    return SolveReport(
        flow=flow,
        potentials=phi,
        primal_cost=flow_cost(graph, flow),
        dual_value=float(np.dot(d, phi)),
        preconditioner_calls=sum(r.preconditioner_calls for r in reports),
        rounds_per_guess=[k for r in reports for k in r.rounds_per_guess],
        guesses_tried=[g for r in reports for g in r.guesses_tried],
        wall_time=time.perf_counter() - start,
    )
