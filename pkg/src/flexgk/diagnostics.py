"""Inexactness estimates for the flexible solvers.

These are observers: nothing here feeds back into a solver trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fgk import FgkState, error_apply, inexact_adjoint_apply
from .operators import Operator
from .weights import smoothed_lp_objective

__all__ = [
    "OPNORM_INFLATION",
    "InexactnessReport",
    "estimate_opnorm",
    "gradient_gap_bound",
    "gradient_gap_bound_loose",
    "functional_gap_bound",
    "monotonicity_margin",
    "restricted_inexact_objective",
    "restricted_exact_objective",
    "inexactness_report",
]

OPNORM_INFLATION = 1.1
POWER_ITERS = 20


@dataclass
class InexactnessReport:
    k: int
    grad_gap_true: float
    grad_gap_bound: float
    grad_gap_bound_loose: float
    func_gap_true: float
    func_gap_bound: float
    monotonicity_K: float
    monotonicity_err: float
    f_prev: float | None = None
    f_curr: float | None = None
    cycle: int = 0


def estimate_opnorm(op: Operator, iters: int = 10, seed: int = 0) -> float:
    """Largest singular value of the bidiagonal from ``iters`` Golub-Kahan steps.

    This is a lower estimate of ``||A||_2``; multiply by
    :data:`OPNORM_INFLATION` before using it in an upper bound.
    """
    if iters < 2:
        raise ValueError(f"iters must be >= 2, got {iters}")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.cols)
    v /= np.linalg.norm(v)
    Us, Vs = [], [v]
    alphas, betas = [], []
    for j in range(iters):
        u = op.apply(Vs[-1]) - (betas[-1] * Us[-1] if betas else 0.0)
        if Us:
            Ub = np.column_stack(Us)
            u -= Ub @ (Ub.T @ u)
        a = float(np.linalg.norm(u))
        if a == 0.0:
            break
        alphas.append(a)
        Us.append(u / a)
        w = op.apply_adjoint(Us[-1]) - a * Vs[-1]
        Vb = np.column_stack(Vs)
        w -= Vb @ (Vb.T @ w)
        bnorm = float(np.linalg.norm(w))
        if bnorm <= 1e-14 * a or j == iters - 1:
            break
        betas.append(bnorm)
        Vs.append(w / bnorm)
    if not alphas:
        return 0.0
    n = len(alphas)
    B = np.diag(alphas) + np.diag(betas[: n - 1], 1)
    return float(np.linalg.svd(B, compute_uv=False)[0])


def _norm_AtE(op, e, start, iters, rng):
    """Power estimate of ``||A^T diag(e)||``, never below ``||A^T diag(e) start||``."""
    if not np.any(e):
        return 0.0
    best = 0.0
    for x in (np.asarray(start, dtype=float), rng.standard_normal(op.rows)):
        nx = np.linalg.norm(x)
        if nx == 0.0:
            continue
        x = x / nx
        for _ in range(iters):
            z = op.apply_adjoint(e * x)
            best = max(best, float(np.linalg.norm(z)))
            x = e * op.apply(z)
            nx = np.linalg.norm(x)
            if nx == 0.0:
                break
            x = x / nx
    return best


def _gaps(state):
    last = state.weight_diags[state.k]
    return [w - last for w in state.weight_diags]


def gradient_gap_bound(state: FgkState, s, op: Operator | None = None, *,
                       power_iters: int = POWER_ITERS, seed: int = 0):
    """Exact gradient gap and its a-priori bound at ``x_k = V_k s``.

    Returns ``(true_gap, bound)`` with ``true_gap`` the norm of the difference
    between ``A^T R_{k+1}^{-1}(A x_k - r0)`` and its inexact counterpart, and
    ``bound = ||A^T E_1 r0|| + sum_i ||A^T E_i|| |[M s]_i|``.
    """
    op = state.op if op is None else op
    s = np.asarray(s, dtype=float)
    r0 = state.beta * state.U[:, 0]
    w = op.apply(state.Vk @ s) - r0
    exact = op.apply_adjoint(state.weight_diags[state.k] * w)
    true_gap = float(np.linalg.norm(exact - inexact_adjoint_apply(state, w)))

    rng = np.random.default_rng(seed)
    sbar = state.M @ s
    bound = float(np.linalg.norm(op.apply_adjoint(error_apply(state, 1, r0))))
    for i, e in enumerate(_gaps(state)):
        if sbar[i] == 0.0:
            continue
        bound += _norm_AtE(op, e, state.U[:, i], power_iters, rng) * abs(sbar[i])
    return true_gap, bound


def gradient_gap_bound_loose(state: FgkState, s, normA: float) -> float:
    """Cheaper bound with ``||A^T E_i|| <= ||A|| max_j |[E_i]_jj|``."""
    s = np.asarray(s, dtype=float)
    r0 = state.beta * state.U[:, 0]
    sbar = state.M @ s
    gaps = _gaps(state)
    bound = normA * float(np.linalg.norm(gaps[0] * r0))
    for i, e in enumerate(gaps):
        bound += normA * float(np.abs(e).max()) * abs(sbar[i])
    return bound


def _proj_residual(state, s):
    z = state.M @ np.asarray(s, dtype=float)
    z[0] -= state.beta
    return z  # r = -U z


def restricted_inexact_objective(state: FgkState, s) -> float:
    """``1/2 (M s - beta e1)^T G (M s - beta e1)`` with ``G = sym(U^T Y)``."""
    z = _proj_residual(state, s)
    UY = state.U.T @ state.Y
    return 0.5 * float(z @ (0.5 * (UY + UY.T)) @ z)


def restricted_exact_objective(state: FgkState, s, op: Operator | None = None) -> float:
    """``1/2 ||A V_k s - r0||^2`` in the ``R_{k+1}^{-1}`` norm, via the operator."""
    op = state.op if op is None else op
    r = op.apply(state.Vk @ np.asarray(s, dtype=float)) - state.beta * state.U[:, 0]
    return 0.5 * float(r @ (state.weight_diags[state.k] * r))


def functional_gap_bound(state: FgkState, s):
    """``(|gbar_k(s) - g_k(s)|, 1/2 ||r_k|| sum_i ||E_i|| |[M s - beta e1]_i|)``."""
    z = _proj_residual(state, s)
    true_gap = abs(restricted_inexact_objective(state, s) - restricted_exact_objective(state, s))
    rnorm = float(np.linalg.norm(state.U @ z))
    total = sum(float(np.abs(e).max()) * abs(z[i]) for i, e in enumerate(_gaps(state)))
    return true_gap, 0.5 * rnorm * total


def monotonicity_margin(state: FgkState, s_k, s_km1):
    """Progress ``K`` of the inexact objective and the error term ``err``.

    ``s_km1`` are the previous coefficients of the same cycle (length
    ``k-1``, possibly empty). ``K > err`` is the sufficient condition for a
    decrease of the smoothed objective when ``R_{k+1}^{-1} = R^{-1}(x_{k-1})``.
    """
    k = state.k
    s_k = np.asarray(s_k, dtype=float)
    prev = np.zeros(k)
    prev[: len(s_km1)] = s_km1
    K = restricted_inexact_objective(state, prev) - restricted_inexact_objective(state, s_k)
    nu = state.U @ (state.M @ (prev - s_k))
    U = state.U
    proj = U.T @ nu
    err = 0.0
    for i, e in enumerate(_gaps(state)):
        err += float(nu @ (e * U[:, i])) * proj[i]
    return K, abs(err)


def inexactness_report(state: FgkState, s, s_prev, *, normA: float, x=None, x_prev=None,
                       b=None, policy=None, seed: int = 0) -> InexactnessReport:
    tg, tb = gradient_gap_bound(state, s, seed=seed)
    fg, fb = functional_gap_bound(state, s)
    K, err = monotonicity_margin(state, s, s_prev)
    rep = InexactnessReport(
        k=state.k,
        grad_gap_true=tg,
        grad_gap_bound=tb,
        grad_gap_bound_loose=gradient_gap_bound_loose(state, s, normA),
        func_gap_true=fg,
        func_gap_bound=fb,
        monotonicity_K=K,
        monotonicity_err=err,
    )
    if x is not None and policy is not None and policy.mode == "lp":
        op = state.op
        rep.f_curr = smoothed_lp_objective(op.apply(x) - b, policy.p, policy.tau)
        rep.f_prev = smoothed_lp_objective(op.apply(x_prev) - b, policy.p, policy.tau)
    return rep
