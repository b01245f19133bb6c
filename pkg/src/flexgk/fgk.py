"""Flexible Golub-Kahan factorization with variable weights on the right of A^T.

After ``k`` steps the state satisfies::

    A V_k = U_{k+1} M_k,        A^T Y_{k+1} = V_{k+1} T_{k+1},

with ``y_i = R_i^{-1} u_i``, ``M_k`` upper Hessenberg and ``T_{k+1}`` upper
triangular. Weight diagonals ``R_i^{-1}`` are supplied by the caller one step
at a time, so that they can depend on the latest iterate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .operators import Operator

__all__ = [
    "BreakdownError",
    "ZeroResidualError",
    "FgkState",
    "FactorizationResiduals",
    "fgk_init",
    "fgk_step",
    "rbar_apply",
    "error_apply",
    "inexact_adjoint_apply",
    "factorization_residuals",
    "BREAKDOWN_TOL",
]

BREAKDOWN_TOL = 1e-14


class BreakdownError(ArithmeticError):
    """The factorization cannot be extended."""


class ZeroResidualError(ValueError):
    """The initial residual is zero, so the current iterate already solves the problem."""


def _check_diag(diag, m):
    d = np.asarray(diag, dtype=float)
    if d.shape != (m,):
        raise ValueError(f"weight diagonal must have length {m}, got shape {d.shape}")
    if not np.all(d > 0) or not np.all(np.isfinite(d)):
        raise ValueError("weight diagonal entries must be positive and finite")
    return d


@dataclass
class FgkState:
    """Bases and projected matrices after ``k`` flexible Golub-Kahan steps.

    Only the leading ``k+1`` columns of the internal buffers are meaningful;
    use the properties (``U``, ``V``, ``Y``, ``M``, ``T``) to read them.
    ``breakdown`` is ``None`` while the factorization can be extended, or
    ``"u"`` / ``"v"`` naming the vector whose norm vanished at the last step.
    A ``"u"`` breakdown stores a zero ``u_{k+1}``, so that ``A V_k = U M_k``
    still holds and the projected problems stay solvable.
    """

    op: Operator
    beta: float
    weight_diags: list = field(default_factory=list)
    k: int = 0
    reorth: bool = True
    breakdown: str | None = None
    norm_est: float = 0.0
    _U: np.ndarray = field(default=None, repr=False)
    _V: np.ndarray = field(default=None, repr=False)
    _Y: np.ndarray = field(default=None, repr=False)
    _M: np.ndarray = field(default=None, repr=False)
    _T: np.ndarray = field(default=None, repr=False)

    @property
    def U(self):
        return self._U[:, : self.k + 1]

    @property
    def V(self):
        return self._V[:, : self.k + 1]

    @property
    def Vk(self):
        return self._V[:, : self.k]

    @property
    def Y(self):
        return self._Y[:, : self.k + 1]

    @property
    def M(self):
        return self._M[: self.k + 1, : self.k]

    @property
    def T(self):
        return self._T[: self.k + 1, : self.k + 1]

    @property
    def t11(self) -> float:
        return float(self._T[0, 0])

    @property
    def W(self) -> np.ndarray:
        """Weight diagonals stacked column-wise, shape ``(m, k+1)``."""
        return np.column_stack(self.weight_diags)

    def _grow(self):
        cap = self._U.shape[1]
        if self.k + 2 <= cap:
            return
        new = 2 * cap

        def widen(a, rows=None):
            rows = a.shape[0] if rows is None else rows
            out = np.zeros((rows, new))
            out[: a.shape[0], : a.shape[1]] = a
            return out

        self._U, self._V, self._Y = widen(self._U), widen(self._V), widen(self._Y)
        self._M = widen(self._M, new)
        self._T = widen(self._T, new)

    def copy(self) -> "FgkState":
        return FgkState(
            op=self.op,
            beta=self.beta,
            weight_diags=list(self.weight_diags),
            k=self.k,
            reorth=self.reorth,
            breakdown=self.breakdown,
            norm_est=self.norm_est,
            _U=self._U.copy(),
            _V=self._V.copy(),
            _Y=self._Y.copy(),
            _M=self._M.copy(),
            _T=self._T.copy(),
        )


def _orthogonalize(w, basis, reorth):
    """Modified Gram-Schmidt against the columns of ``basis`` (plus one CGS pass)."""
    coeffs = np.zeros(basis.shape[1])
    for j in range(basis.shape[1]):
        c = w @ basis[:, j]
        w = w - c * basis[:, j]
        coeffs[j] = c
    if reorth and basis.shape[1]:
        c = basis.T @ w
        w = w - basis @ c
        coeffs += c
    return w, coeffs


def fgk_init(op: Operator, r0, first_diag, *, reorth: bool = True, capacity: int = 16) -> FgkState:
    """Start the factorization from ``r0`` with weights ``R_1^{-1} = diag(first_diag)``."""
    r0 = np.asarray(r0, dtype=float)
    if r0.shape != (op.rows,):
        raise ValueError(f"r0 must have length {op.rows}, got shape {r0.shape}")
    d = _check_diag(first_diag, op.rows)
    beta = float(np.linalg.norm(r0))
    if beta == 0.0:
        raise ZeroResidualError("zero initial residual")
    cap = max(int(capacity), 2)
    state = FgkState(
        op=op,
        beta=beta,
        weight_diags=[d],
        reorth=reorth,
        _U=np.zeros((op.rows, cap)),
        _V=np.zeros((op.cols, cap)),
        _Y=np.zeros((op.rows, cap)),
        _M=np.zeros((cap, cap)),
        _T=np.zeros((cap, cap)),
    )
    u1 = r0 / beta
    y1 = d * u1
    v = op.apply_adjoint(y1)
    t11 = float(np.linalg.norm(v))
    ynorm = float(np.linalg.norm(y1))
    if t11 == 0.0:
        raise BreakdownError("breakdown: A^T R_1^{-1} r0 = 0")
    state.norm_est = t11 / ynorm
    state._U[:, 0] = u1
    state._Y[:, 0] = y1
    state._V[:, 0] = v / t11
    state._T[0, 0] = t11
    return state


def fgk_step(state: FgkState, next_diag) -> FgkState:
    """Advance the factorization by one step, in place.

    ``next_diag`` weights the new residual-space vector: with ``k`` steps
    done it is ``R_{k+2}^{-1}`` (1-based). Returns ``state``.
    """
    if state.breakdown is not None:
        raise BreakdownError(f"factorization already broke down ({state.breakdown})")
    op = state.op
    d = _check_diag(next_diag, op.rows)
    state._grow()
    i = state.k  # 0-based index of the last available v
    U = state._U[:, : i + 1]
    V = state._V[:, : i + 1]

    w = op.apply(state._V[:, i])
    state.norm_est = max(state.norm_est, float(np.linalg.norm(w)))
    w, h = _orthogonalize(w, U, state.reorth)
    state._M[: i + 1, i] = h
    nu = float(np.linalg.norm(w))
    state.weight_diags.append(d)
    if nu <= BREAKDOWN_TOL * state.norm_est:
        state._M[i + 1, i] = 0.0
        state.k += 1
        state.breakdown = "u"
        return state
    u = w / nu
    state._M[i + 1, i] = nu
    state._U[:, i + 1] = u

    y = d * u
    state._Y[:, i + 1] = y
    z = op.apply_adjoint(y)
    ynorm = float(np.linalg.norm(y))
    state.norm_est = max(state.norm_est, float(np.linalg.norm(z)) / ynorm)
    z, t = _orthogonalize(z, V, state.reorth)
    state._T[: i + 1, i + 1] = t
    tau = float(np.linalg.norm(z))
    state.k += 1
    if tau <= BREAKDOWN_TOL * state.norm_est * ynorm:
        state._T[i + 1, i + 1] = 0.0
        state.breakdown = "v"
        return state
    state._T[i + 1, i + 1] = tau
    state._V[:, i + 1] = z / tau
    return state


def rbar_apply(state: FgkState, u) -> np.ndarray:
    """``sum_i R_i^{-1} u_i (u_i^T u)`` over the current ``k+1`` basis vectors."""
    U = state.U
    return state.W * U @ (U.T @ np.asarray(u, dtype=float))


def error_apply(state: FgkState, i: int, w) -> np.ndarray:
    """``(R_i^{-1} - R_{k+1}^{-1}) w`` for 1-based ``i``."""
    if not 1 <= i <= state.k + 1:
        raise IndexError(f"weight index {i} outside 1..{state.k + 1}")
    return (state.weight_diags[i - 1] - state.weight_diags[state.k]) * np.asarray(w, dtype=float)


def inexact_adjoint_apply(state: FgkState, w) -> np.ndarray:
    """``(A + E)^T R_{k+1}^{-1} w`` with the inexactness expanded over ``u_i u_i^T``.

    The m x m perturbation is never formed: its action is
    ``A^T sum_i E_i u_i (u_i^T w)``.
    """
    w = np.asarray(w, dtype=float)
    U = state.U
    proj = U.T @ w
    acc = state.weight_diags[state.k] * w
    for i in range(state.k + 1):
        acc = acc + error_apply(state, i + 1, U[:, i]) * proj[i]
    return state.op.apply_adjoint(acc)


class FactorizationResiduals(NamedTuple):
    left: float       # ||A V_k - U_{k+1} M_k||_F
    flexible: float   # ||A^T Rbar U - V T||_F
    inexact: float    # ||(A + E)^T R_{k+1}^{-1} U - V T||_F
    lanczos: float    # ||A^T Rbar A V_k - V T M||_F


def factorization_residuals(state: FgkState, op: Operator | None = None) -> FactorizationResiduals:
    op = state.op if op is None else op
    if state.k < 1:
        raise ValueError("need at least one completed step")
    U, V, Vk, M, T = state.U, state.V, state.Vk, state.M, state.T
    AV = np.column_stack([op.apply(Vk[:, j]) for j in range(state.k)])
    left = np.linalg.norm(AV - U @ M)
    VT = V @ T
    flex = np.column_stack(
        [op.apply_adjoint(rbar_apply(state, U[:, j])) for j in range(state.k + 1)]
    )
    inex = np.column_stack(
        [inexact_adjoint_apply(state, U[:, j]) for j in range(state.k + 1)]
    )
    lanc = np.column_stack(
        [op.apply_adjoint(rbar_apply(state, AV[:, j])) for j in range(state.k)]
    )
    return FactorizationResiduals(
        left=float(left),
        flexible=float(np.linalg.norm(flex - VT)),
        inexact=float(np.linalg.norm(inex - VT)),
        lanczos=float(np.linalg.norm(lanc - VT @ M)),
    )
