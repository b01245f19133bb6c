"""Restart criteria for the flexible solvers.

Two triggers are available:

* ``weights``: track, for every retained weight ``R_i^{-1}``, the distance
  ``e_i = max_j |[R_i^{-1}]_jj - [R^{-1}(x_k)]_jj|`` across iterations and
  restart the first time any of them grows.
* ``residual``: restart when
  ``(||A x_k - b|| - ||A x_0 - b||) / ||A x_k - b|| > tol``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .operators import Operator

__all__ = [
    "RestartPolicy",
    "WeightsCriterion",
    "check_restart_weights",
    "check_restart_residual",
    "AUTO_PAIRING",
]

AUTO_PAIRING = {"dap": "weights", "dap_lsmr": "weights", "apd": "residual"}


@dataclass(frozen=True)
class RestartPolicy:
    mode: str = "none"
    tol: float = 0.1
    max_cycles: int = 10
    entrywise: bool = False

    def __post_init__(self):
        if self.mode not in ("none", "weights", "residual", "auto"):
            raise ValueError(f"unknown restart mode {self.mode!r}")
        if not self.tol > 0:
            raise ValueError(f"restart tol must be positive, got {self.tol}")
        if self.max_cycles < 1:
            raise ValueError(f"max_cycles must be >= 1, got {self.max_cycles}")

    def resolve(self, method: str) -> str:
        """Concrete criterion for ``method`` (``auto`` picks per method)."""
        if self.mode != "auto":
            return self.mode
        return AUTO_PAIRING.get(method, "none")


class WeightsCriterion:
    """Stateful weight-inexactness trigger for one restart cycle.

    Call once per iteration with the factorization state (holding
    ``R_1^{-1}..R_{k+1}^{-1}``) and ``R^{-1}(x_k)``. The first call only
    records the history. With ``entrywise=True`` each diagonal position
    is compared separately instead of through the max.
    """

    def __init__(self, entrywise: bool = False):
        self.entrywise = entrywise
        self.history: list = []

    def reset(self):
        self.history = []

    def __call__(self, state, next_diag) -> bool:
        return check_restart_weights(state, next_diag, self)


def check_restart_weights(state, next_diag, criterion: WeightsCriterion | None = None) -> bool:
    if criterion is None:
        criterion = WeightsCriterion()
    nd = np.asarray(next_diag, dtype=float)
    gaps = [np.abs(w - nd) for w in state.weight_diags]
    current = gaps if criterion.entrywise else [float(g.max()) for g in gaps]
    previous = criterion.history[-1] if criterion.history else None
    criterion.history.append(current)
    if previous is None:
        return False
    for old, new in zip(previous, current):
        if np.any(np.asarray(new) > np.asarray(old)):
            return True
    return False


def check_restart_residual(op: Operator, b, x_k, x_0, tol: float) -> bool:
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if math.isinf(tol):
        return False
    b = np.asarray(b, dtype=float)
    rk = float(np.linalg.norm(op.apply(x_k) - b))
    if rk == 0.0:
        return False
    r0 = float(np.linalg.norm(op.apply(x_0) - b))
    return (rk - r0) / rk > tol
