"""Smooth max and the multiplicative-weights game.

MW is written as Frank-Wolfe on ``smax_beta(A x) + <b, x>``: each round the
gradient of the smooth max at the running sum ``A x_*`` is handed to an oracle,
and the oracle's answer is added to the running sum. The matrix ``A`` is only
touched through the ``apply_A`` callback.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Optional, Union

import numpy as np

from .errors import EmptyVector, WidthViolation

WIDTH_RTOL = 1e-9


def _as_vector(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise EmptyVector("smax needs a nonempty 1-d vector")
    return x


def smax(x, beta: float) -> float:
    """Stable ``(1/beta) * ln(sum_i exp(beta * x_i))``."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    x = _as_vector(x)
    top = float(np.max(x))
    return top + float(np.log(np.sum(np.exp(beta * (x - top))))) / beta


def smax_gradient(x, beta: float) -> np.ndarray:
    """Softmax weights ``exp(beta x_i) / Z``, a point of the probability simplex."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    x = _as_vector(x)
    z = np.exp(beta * (x - np.max(x)))
    return z / np.sum(z)


def canonical_round_count(epsilon: float, width: float, rows: int) -> int:
    # ln(1) = 0 would give zero rounds; one round is the least that yields an average
    return max(1, math.ceil(4.0 * width**2 * math.log(rows) / epsilon**2))


def feasibility_round_count(epsilon: float, width: float, rows: int) -> int:
    return max(1, math.ceil(4.0 * width**2 * math.log(2 * rows) / epsilon**2))


@dataclass(frozen=True)
class MwConfig:
    """``epsilon``: additive accuracy; ``width``: bound on ``||A x_t||_inf``;
    ``rows``: number of rows of A; ``round_cap`` overrides the default round count."""

    epsilon: float
    width: float
    rows: int
    round_cap: Optional[int] = None

    def __post_init__(self):
        if self.epsilon <= 0 or self.width <= 0 or self.rows < 1:
            raise ValueError(f"invalid MW configuration {self!r}")

    @property
    def beta(self) -> float:
        return self.epsilon / (2.0 * self.width**2)

    @property
    def feasibility_rounds(self) -> int:
        if self.round_cap is not None:
            return self.round_cap
        return feasibility_round_count(self.epsilon, self.width, self.rows)

    @property
    def canonical_rounds(self) -> int:
        if self.round_cap is not None:
            return self.round_cap
        return canonical_round_count(self.epsilon, self.width, self.rows)


@dataclass(frozen=True)
class LinearizedQuery:
    p: np.ndarray
    round_index: int


@dataclass(frozen=True)
class Solved:
    x: np.ndarray


@dataclass(frozen=True)
class Failed:
    payload: Any = None


OracleResponse = Union[Solved, Failed]


@dataclass(frozen=True)
class OracleFailure:
    round_index: int
    payload: Any = None


@dataclass(frozen=True)
class RoundRecord:
    """Instrumentation of one round: ``potential_*`` is ``smax(A x) + <b, x>``
    on the running sum before and after the update, ``mu`` the oracle's
    linearized value."""

    round_index: int
    mu: float
    potential_before: float
    potential_after: float
    width_used: float


def _check_width(ax: np.ndarray, width: float, t: int) -> float:
    used = float(np.abs(ax).max()) if ax.size else 0.0
    if used > width * (1.0 + WIDTH_RTOL):
        raise WidthViolation(f"round {t}: oracle response has ||Ax||_inf = {used!r} > width {width!r}")
    return used


def canonical_mw(
    oracle: Callable[[LinearizedQuery], Any],
    apply_A: Callable[[np.ndarray], np.ndarray],
    b,
    config: MwConfig,
    trace: Optional[list] = None,
) -> np.ndarray:
    """Approximately minimize ``max_i (A x)_i + <b, x>`` over the oracle's set.

    ``oracle`` receives ``p`` in the probability simplex and returns some
    ``x_t`` (ideally minimizing ``<p, A x> + <b, x>``). The average of the
    returned points is within ``epsilon`` of the best linearized value seen.
    """
    b = np.asarray(b, dtype=float)
    beta = config.beta
    rounds = config.canonical_rounds
    ax_sum = np.zeros(config.rows)
    x_sum = np.zeros_like(b)
    for t in range(1, rounds + 1):
        p = smax_gradient(ax_sum, beta)
        x_t = np.asarray(oracle(LinearizedQuery(p, t)), dtype=float)
        ax_t = np.asarray(apply_A(x_t), dtype=float)
        used = _check_width(ax_t, config.width, t)
        if trace is not None:
            before = smax(ax_sum, beta) + float(b @ x_sum)
        x_sum = x_sum + x_t
        ax_sum = ax_sum + ax_t
        if trace is not None:
            mu = float(p @ ax_t) + float(b @ x_t)
            after = smax(ax_sum, beta) + float(b @ x_sum)
            trace.append(RoundRecord(t, mu, before, after, used))
    return x_sum / rounds


def flattened_weights(ax_sum: np.ndarray, beta: float) -> np.ndarray:
    """Softmax over the stacked vector ``[q; -q]`` folded back to ``p = p1 - p2``."""
    shift = beta * float(np.abs(ax_sum).max()) if ax_sum.size else 0.0
    pos = np.exp(beta * ax_sum - shift)
    neg = np.exp(-beta * ax_sum - shift)
    return (pos - neg) / (np.sum(pos) + np.sum(neg))


def feasibility_mw(
    oracle: Callable[[LinearizedQuery], OracleResponse],
    apply_A: Callable[[np.ndarray], np.ndarray],
    b,
    gamma: float,
    config: MwConfig,
    trace: Optional[list] = None,
):
    """Find ``x`` with ``||A x||_inf + <b, x> <= gamma`` or stop at an oracle failure.

    Each round the oracle gets ``p`` with ``||p||_1 <= 1`` and must answer
    ``Solved(x)`` with ``<p, A x> + <b, x> <= gamma - epsilon``, or ``Failed``.
    Returns ``Solved(average)`` after all rounds, else ``OracleFailure``.
    """
    b = np.asarray(b, dtype=float)
    beta = config.beta
    eps = config.epsilon
    rounds = config.feasibility_rounds
    ax_sum = np.zeros(config.rows)
    x_sum = np.zeros_like(b)
    for t in range(1, rounds + 1):
        p = flattened_weights(ax_sum, beta)
        response = oracle(LinearizedQuery(p, t))
        if isinstance(response, Failed):
            return OracleFailure(t, response.payload)
        if not isinstance(response, Solved):
            raise TypeError(f"oracle returned {type(response).__name__}, expected Solved or Failed")
        x_t = np.asarray(response.x, dtype=float)
        ax_t = np.asarray(apply_A(x_t), dtype=float)
        used = _check_width(ax_t, config.width, t)
        lin = float(p @ ax_t)
        bx = float(b @ x_t)
        slack = 1e-9 * (abs(lin) + abs(bx) + abs(gamma) + eps)
        if lin + bx > gamma - eps + slack:
            raise ValueError(
                f"round {t}: oracle answer has linearized value {lin + bx!r} > gamma - epsilon = {gamma - eps!r}"
            )
        if trace is not None:
            stacked = np.concatenate([ax_sum, -ax_sum])
            before = smax(stacked, beta) + float(b @ x_sum)
        x_sum = x_sum + x_t
        ax_sum = ax_sum + ax_t
        if trace is not None:
            stacked = np.concatenate([ax_sum, -ax_sum])
            after = smax(stacked, beta) + float(b @ x_sum)
            trace.append(RoundRecord(t, lin + bx, before, after, used))
    return Solved(x_sum / rounds)
