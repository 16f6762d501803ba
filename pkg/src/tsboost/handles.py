"""The preconditioner interface consumed by the boosting loop."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True, eq=False)
class PreconditionerOutput:
    potentials: np.ndarray
    flow: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class PreconditionerHandle:
    """An ``alpha``-approximate preconditioner.

    For every proper demand ``d`` the returned potentials satisfy
    ``||W^-1 B^T phi||_inf <= alpha``, and some flow ``f`` routing ``d`` has
    ``||W f||_1 <= <d, phi>``. Primal-dual handles also return that ``f``.
    ``tree`` is set by spanning-tree handles so the boosting loop can take a
    compiled fast path.
    """

    query: Callable[[np.ndarray], PreconditionerOutput]
    alpha: float
    dual_only: bool
    name: str = "custom"
    tree: Optional[object] = None

    def __call__(self, demand) -> PreconditionerOutput:
        return self.query(np.asarray(demand, dtype=float))
