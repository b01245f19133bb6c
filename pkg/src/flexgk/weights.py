"""IRLS weights for smoothed l_p data fitting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import Operator

__all__ = ["WeightPolicy", "lp_weights", "weights_at", "smoothed_lp_objective"]


def lp_weights(residual, p: float, tau: float) -> np.ndarray:
    """Diagonal of ``R^{-1} = W^2`` for the smoothed ``l_p`` fit.

    Entry ``j`` is ``(residual_j**2 + tau**2) ** ((p - 2) / 2)``.
    """
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if not 0 < p <= 2:
        raise ValueError(f"p must lie in (0, 2], got {p}")
    r = np.asarray(residual, dtype=float)
    return (r * r + tau * tau) ** ((p - 2.0) / 2.0)


def smoothed_lp_objective(residual, p: float, tau: float) -> float:
    """``sum((r_j^2 + tau^2)^(p/2)) / p``; the weights above are its tangent majorant."""
    r = np.asarray(residual, dtype=float)
    return float(np.sum((r * r + tau * tau) ** (p / 2.0)) / p)


@dataclass(frozen=True)
class WeightPolicy:
    """Rule producing a diagonal inverse covariance from an iterate.

    ``mode="lp"`` uses :func:`lp_weights` on ``A x - b``; ``mode="fixed"``
    always returns ``fixed_diag``.
    """

    mode: str = "lp"
    p: float = 1.0
    tau: float = 1e-2
    fixed_diag: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in ("lp", "fixed"):
            raise ValueError(f"unknown weight mode {self.mode!r}")
        if self.mode == "fixed":
            if self.fixed_diag is None:
                raise ValueError("fixed weight policy needs fixed_diag")
            d = np.array(self.fixed_diag, dtype=float)
            if np.any(~np.isfinite(d)) or np.any(d <= 0):
                raise ValueError("fixed_diag entries must be positive and finite")
            d.setflags(write=False)
            object.__setattr__(self, "fixed_diag", d)
        else:
            lp_weights(np.zeros(1), self.p, self.tau)  # validates p, tau

    @classmethod
    def identity(cls, m: int) -> "WeightPolicy":
        return cls(mode="fixed", fixed_diag=np.ones(m))

    def __call__(self, residual) -> np.ndarray:
        if self.mode == "fixed":
            return self.fixed_diag
        return lp_weights(residual, self.p, self.tau)


def weights_at(policy: WeightPolicy, x, op: Operator, b) -> np.ndarray:
    if policy.mode == "fixed":
        return policy.fixed_diag
    return lp_weights(op.apply(x) - np.asarray(b, dtype=float), policy.p, policy.tau)
