"""Projected-problem solvers built on the flexible Golub-Kahan factorization.

Three flexible/inexact solution rules share one factorization:

``dap``
    Galerkin condition on the inexact gradient (inexact CGLS/LSQR):
    ``T_{k,k+1} M_k s = beta t11 e1``.
``dap_lsmr``
    Minimal inexact gradient: ``min_s ||T_{k+1} M_k s - beta t11 e1||``.
``apd``
    Minimizer of the inexact objective built from ``Rbar``:
    ``(T_{k,k+1} M_k + (T_{k,k+1} M_k)^T) s = beta t11 e1 + M_k^T Y^T r0``.

``reference_lsqr_fixed`` is the classical weighted LSQR used as the
fixed-weight reference, and ``irls_outer`` the inner-outer IRLS baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import diagnostics as diag
from .fgk import BREAKDOWN_TOL, BreakdownError, FgkState, ZeroResidualError, fgk_init, fgk_step
from .operators import Operator
from .problems import Problem, relative_error
from .restart import RestartPolicy, WeightsCriterion, check_restart_residual
from .weights import WeightPolicy, weights_at

__all__ = [
    "DegenerateProjectionError",
    "ProjectedSolution",
    "IterationRecord",
    "SolverRun",
    "METHODS",
    "solve_projected_dap",
    "solve_projected_dap_lsmr",
    "solve_projected_apd",
    "solve_projected",
    "reference_lsqr_fixed",
    "irls_outer",
    "run_solver",
]

METHODS = ("lsqr", "dap", "dap_lsmr", "apd", "irls", "exact")
FGK_METHODS = ("dap", "dap_lsmr", "apd")
COND_LIMIT = 1e14


class DegenerateProjectionError(ArithmeticError):
    """The projected system is singular or (for ``apd``) not positive definite."""


@dataclass(frozen=True)
class ProjectedSolution:
    s: np.ndarray
    method: str
    k: int


def _check_k(state):
    if state.k < 1:
        raise ValueError("projected problems need at least one factorization step")


def _rhs(state):
    rhs = np.zeros(state.k)
    rhs[0] = state.beta * state.t11
    return rhs


def solve_projected_dap(state: FgkState) -> ProjectedSolution:
    _check_k(state)
    k = state.k
    H = state.T[:k, :] @ state.M
    if np.linalg.cond(H) > COND_LIMIT:
        raise DegenerateProjectionError(f"projected DAP matrix is singular at k={k}")
    s = sla.lu_solve(sla.lu_factor(H), _rhs(state))
    return ProjectedSolution(s, "dap", k)


def solve_projected_dap_lsmr(state: FgkState) -> ProjectedSolution:
    _check_k(state)
    k = state.k
    H = state.T @ state.M
    c = np.zeros(k + 1)
    c[0] = state.beta * state.t11
    Q, R = np.linalg.qr(H)
    d = np.abs(np.diag(R))
    if d.min() <= COND_LIMIT**-1 * d.max():
        raise DegenerateProjectionError(f"T M is rank deficient at k={k}")
    s = sla.solve_triangular(R, Q.T @ c)
    return ProjectedSolution(s, "dap_lsmr", k)


def solve_projected_apd(state: FgkState) -> ProjectedSolution:
    _check_k(state)
    k = state.k
    H = state.T[:k, :] @ state.M
    S = H + H.T
    rhs = _rhs(state) + state.M.T @ (state.Y.T @ state.U[:, 0]) * state.beta
    evals = np.linalg.eigvalsh(S)
    scale = np.abs(evals).max()
    if scale == 0.0 or evals.min() <= scale / COND_LIMIT:
        raise DegenerateProjectionError(
            f"APD projected matrix not positive definite at k={k} "
            f"(eigenvalue range [{evals.min():.3g}, {evals.max():.3g}])"
        )
    s = sla.cho_solve(sla.cho_factor(S), rhs)
    return ProjectedSolution(s, "apd", k)


_SOLVE = {
    "dap": solve_projected_dap,
    "dap_lsmr": solve_projected_dap_lsmr,
    "apd": solve_projected_apd,
}


def solve_projected(state: FgkState, method: str) -> ProjectedSolution:
    try:
        return _SOLVE[method](state)
    except KeyError:
        raise ValueError(f"unknown projected method {method!r}") from None


@dataclass
class IterationRecord:
    k: int
    relres: float
    relerr: float | None = None
    objective_lp: float | None = None
    restarted: bool = False
    bound_grad: float | None = None
    bound_func: float | None = None
    cycle: int = 0
    k_local: int = 0


@dataclass
class SolverRun:
    """History of one solver run.

    ``status`` is ``"ok"`` when ``k_max`` iterations were taken, ``"converged"``
    for a zero residual or a lucky breakdown, and ``"breakdown"`` /
    ``"degenerate"`` when the run stopped early with no restart available.
    """

    method: str
    records: list = field(default_factory=list)
    x_best: np.ndarray | None = None
    x_final: np.ndarray | None = None
    restarts: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    status: str = "ok"
    reports: list = field(default_factory=list)
    iterates: list | None = None
    V: np.ndarray | None = None
    Y: np.ndarray | None = None
    state: FgkState | None = None

    @property
    def best_relerr(self) -> float:
        return min(r.relerr for r in self.records)

    @property
    def n_cycles(self) -> int:
        return len(self.restarts) + 1


class _Tracker:
    """Collects records, keeps the best iterate, numbers iterations."""

    def __init__(self, run, op, b, x_true, p, select_by_error, keep_iterates):
        self.run, self.op, self.b, self.x_true = run, op, b, x_true
        self.p = p
        self.bnorm = float(np.linalg.norm(b)) or 1.0
        self.by_error = select_by_error and x_true is not None
        self.best = math.inf
        self.k = 0
        if keep_iterates:
            run.iterates = []

    def add(self, x, cycle, k_local, residual=None):
        self.k += 1
        r = self.op.apply(x) - self.b if residual is None else residual
        rec = IterationRecord(
            k=self.k,
            relres=float(np.linalg.norm(r)) / self.bnorm,
            relerr=None if self.x_true is None else relative_error(x, self.x_true),
            objective_lp=float(np.sum(np.abs(r) ** self.p) / self.p),
            cycle=cycle,
            k_local=k_local,
        )
        self.run.records.append(rec)
        metric = rec.relerr if self.by_error else rec.relres
        if metric < self.best:  # strict: smallest k wins ties
            self.best = metric
            self.run.x_best = x.copy()
        self.run.x_final = x
        if self.run.iterates is not None:
            self.run.iterates.append(x.copy())
        return rec


def _gk_weighted(op, r0, diag_w, k_max, reorth=True):
    """Classical Golub-Kahan in the ``R^{-1}`` inner product (split form).

    Yields ``(k, s_k, V_k)`` where ``x_k = x0 + V_k s_k`` minimizes
    ``||A x - r0||_{R^{-1}}`` over the k-th Krylov space. ``s_k`` solves the
    bidiagonal least-squares problem, equivalent to
    ``B_{k+1,k}^T B_{k+1,k} s = alpha_1 beta e_1``.
    """
    dsq = np.sqrt(diag_w)
    ru = dsq * r0
    beta1 = float(np.linalg.norm(ru))
    if beta1 == 0.0:
        return
    Ut = [ru / beta1]
    v = op.apply_adjoint(dsq * Ut[0])
    alpha = float(np.linalg.norm(v))
    if alpha == 0.0:
        return
    Vs = [v / alpha]
    alphas, betas = [alpha], []
    norm_est = alpha
    for k in range(1, k_max + 1):
        u = dsq * op.apply(Vs[-1]) - alphas[-1] * Ut[-1]
        if reorth:
            Ub = np.column_stack(Ut)
            u -= Ub @ (Ub.T @ u)
        beta = float(np.linalg.norm(u))
        norm_est = max(norm_est, beta)
        done = beta <= BREAKDOWN_TOL * norm_est
        betas.append(0.0 if done else beta)
        B = np.zeros((k + 1, k))
        B[np.arange(k), np.arange(k)] = alphas[:k]
        B[np.arange(1, k + 1), np.arange(k)] = betas[:k]
        c = np.zeros(k + 1)
        c[0] = beta1
        s = np.linalg.lstsq(B, c, rcond=None)[0]
        Vk = np.column_stack(Vs[:k])
        yield k, s, Vk, done
        if done:
            return
        Ut.append(u / beta)
        v = op.apply_adjoint(dsq * Ut[-1]) - beta * Vs[-1]
        if reorth:
            Vb = np.column_stack(Vs)
            v -= Vb @ (Vb.T @ v)
        alpha = float(np.linalg.norm(v))
        norm_est = max(norm_est, alpha)
        if alpha <= BREAKDOWN_TOL * norm_est:
            return
        alphas.append(alpha)
        Vs.append(v / alpha)


def reference_lsqr_fixed(
    op: Operator,
    b,
    x0=None,
    fixed_diag=None,
    k_max: int = 50,
    *,
    x_true=None,
    p: float = 2.0,
    reorth: bool = True,
    select_by_error: bool = False,
    keep_iterates: bool = False,
    _run: SolverRun | None = None,
    _tracker: _Tracker | None = None,
    _cycle: int = 0,
) -> SolverRun:
    """Weighted LSQR with a fixed diagonal ``R^{-1}``; plain LSQR for unit weights."""
    b = np.asarray(b, dtype=float)
    x0 = np.zeros(op.cols) if x0 is None else np.asarray(x0, dtype=float)
    w = np.ones(op.rows) if fixed_diag is None else np.asarray(fixed_diag, dtype=float)
    if np.any(w <= 0):
        raise ValueError("fixed_diag entries must be positive")
    run = _run or SolverRun("lsqr", config={"k_max": k_max, "reorth": reorth})
    tr = _tracker or _Tracker(run, op, b, x_true, p, select_by_error, keep_iterates)
    r0 = b - op.apply(x0)
    status = "converged"
    for k, s, Vk, done in _gk_weighted(op, r0, w, k_max, reorth):
        x = x0 + Vk @ s
        tr.add(x, _cycle, k)
        run.V = Vk
        if done:
            break
    else:
        status = "ok" if tr.k >= k_max or _tracker is not None else "converged"
    if not run.records:
        tr.add(x0.copy(), _cycle, 0)
    run.status = status
    return run


def irls_outer(
    op: Operator,
    b,
    p: float = 1.0,
    tau: float = 1e-2,
    n_outer: int = 20,
    n_inner: int = 10,
    *,
    x0=None,
    x_true=None,
    reorth: bool = True,
    select_by_error: bool = False,
    keep_iterates: bool = False,
) -> SolverRun:
    """Classical IRLS: weights refreshed once per full inner LSQR solve.

    Each outer cycle warm-starts LSQR from the previous outer iterate, with
    weights ``W(x)^2`` evaluated there. Records are flattened over inner
    iterations; ``cycle`` holds the outer index.
    """
    if n_outer < 1 or n_inner < 1:
        raise ValueError("n_outer and n_inner must be >= 1")
    b = np.asarray(b, dtype=float)
    policy = WeightPolicy("lp", p=p, tau=tau)
    x = np.zeros(op.cols) if x0 is None else np.asarray(x0, dtype=float)
    run = SolverRun(
        "irls",
        config={"p": p, "tau": tau, "n_outer": n_outer, "n_inner": n_inner},
    )
    tr = _Tracker(run, op, b, x_true, p, select_by_error, keep_iterates)
    for outer in range(n_outer):
        w = weights_at(policy, x, op, b)
        if outer:
            run.restarts.append(tr.k + 1)
        before = tr.k
        reference_lsqr_fixed(
            op, b, x, w, n_inner, reorth=reorth, _run=run, _tracker=tr, _cycle=outer
        )
        if tr.k == before:
            break
        x = run.x_final
    run.status = "ok"
    return run


def _new_cycle(op, b, x0, policy, reorth):
    """Fresh factorization at ``x0`` with ``R_1^{-1} = R^{-1}(x0)``."""
    r0 = b - op.apply(x0)
    w0 = weights_at(policy, x0, op, b)
    return fgk_init(op, r0, w0, reorth=reorth, capacity=32), w0


def run_solver(
    problem: Problem,
    method: str,
    policy: WeightPolicy | None = None,
    k_max: int = 100,
    restart: RestartPolicy | None = None,
    seed: int = 0,
    *,
    x0=None,
    warm_start: int = 0,
    diagnose: bool = False,
    select_by_error: bool = False,
    reorth: bool = True,
    keep_iterates: bool = False,
    irls_inner: int = 10,
    irls_outer_max: int = 20,
) -> SolverRun:
    """Run ``method`` on ``problem``.

    For the flexible methods each iteration performs one factorization step
    with ``R_{k+1}^{-1} = R^{-1}(x_{k-1})``, solves the projected system,
    forms ``x_k``, evaluates ``R^{-1}(x_k)`` for the next step and consults
    the restart policy. A restart sets ``x0 <- x_k`` and rebuilds the
    factorization with ``R_1^{-1} = R^{-1}(x0)``.

    ``seed`` only drives the operator-norm estimate used by the diagnostics.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    op, b = problem.op, np.asarray(problem.b, dtype=float)
    policy = policy or WeightPolicy()
    restart = restart or RestartPolicy()
    p_metric = policy.p if policy.mode == "lp" else 2.0
    x_start = np.zeros(op.cols) if x0 is None else np.asarray(x0, dtype=float).copy()
    if warm_start > 0:
        ws = reference_lsqr_fixed(op, b, x_start, None, warm_start, reorth=reorth)
        x_start = ws.x_final.copy()

    config = {
        "method": method,
        "policy": policy.mode,
        "p": policy.p,
        "tau": policy.tau,
        "k_max": k_max,
        "restart": restart.resolve(method),
        "restart_tol": restart.tol,
        "max_cycles": restart.max_cycles,
        "seed": seed,
        "warm_start": warm_start,
        "diagnose": diagnose,
        "reorth": reorth,
    }

    if method == "lsqr":
        run = reference_lsqr_fixed(
            op, b, x_start, None, k_max, x_true=problem.x_true, p=p_metric,
            reorth=reorth, select_by_error=select_by_error, keep_iterates=keep_iterates,
        )
        run.config.update(config)
        return run
    if method == "exact":
        if problem.x_true is None:
            raise ValueError("the 'exact' baseline needs x_true")
        w = weights_at(policy, problem.x_true, op, b)
        run = reference_lsqr_fixed(
            op, b, x_start, w, k_max, x_true=problem.x_true, p=p_metric,
            reorth=reorth, select_by_error=select_by_error, keep_iterates=keep_iterates,
        )
        run.method = "exact"
        run.config.update(config)
        return run
    if method == "irls":
        if policy.mode != "lp":
            raise ValueError("irls needs an lp weight policy")
        n_outer = max(1, min(irls_outer_max, math.ceil(k_max / irls_inner)))
        run = irls_outer(
            op, b, policy.p, policy.tau, n_outer, irls_inner, x0=x_start,
            x_true=problem.x_true, reorth=reorth, select_by_error=select_by_error,
            keep_iterates=keep_iterates,
        )
        run.config.update(config)
        return run

    run = SolverRun(method, config=config)
    tr = _Tracker(run, op, b, problem.x_true, p_metric, select_by_error, keep_iterates)
    mode = restart.resolve(method)
    normA = None
    if diagnose:
        normA = diag.OPNORM_INFLATION * diag.estimate_opnorm(op, 30, seed=seed)

    x0c = x_start
    cycle = 0
    while True:
        try:
            state, w0 = _new_cycle(op, b, x0c, policy, reorth)
        except ZeroResidualError:
            run.status = "converged"
            break
        except BreakdownError:
            run.status = "converged"  # A^T R^{-1} r0 = 0: x0 is stationary
            break
        run.status = "ok"
        next_diag = w0
        criterion = WeightsCriterion(entrywise=restart.entrywise)
        can_restart = (
            mode != "none"
            and not (mode == "residual" and math.isinf(restart.tol))
            and cycle + 1 < restart.max_cycles
        )
        s_prev = np.zeros(0)
        x_prev = x0c
        restart_now = False
        while tr.k < k_max:
            fgk_step(state, next_diag)
            try:
                sol = solve_projected(state, method)
            except DegenerateProjectionError:
                run.status = "degenerate"
                restart_now = can_restart and state.k > 1
                break
            x = x0c + state.Vk @ sol.s
            rec = tr.add(x, cycle, state.k)
            if diagnose:
                rep = diag.inexactness_report(
                    state, sol.s, s_prev, normA=normA, x=x, x_prev=x_prev,
                    b=b, policy=policy, seed=seed,
                )
                rep.cycle = cycle
                run.reports.append(rep)
                rec.bound_grad = rep.grad_gap_bound
                rec.bound_func = rep.func_gap_bound
            if state.breakdown is not None:
                # "u": exact solution in the subspace; "v" at k = n: the space is full
                lucky = state.breakdown == "u" or state.k >= op.cols
                run.status = "converged" if lucky else "breakdown"
                restart_now = can_restart and not lucky
                if restart_now:
                    rec.restarted = True
                x_prev = x
                break
            next_diag = weights_at(policy, x, op, b)
            if can_restart:
                if mode == "weights":
                    restart_now = criterion(state, next_diag)
                else:
                    restart_now = check_restart_residual(op, b, x, x0c, restart.tol)
            if restart_now:
                rec.restarted = True
                x_prev = x
                break
            s_prev, x_prev = sol.s, x
        run.V, run.Y, run.state = state.V.copy(), state.Y.copy(), state
        if restart_now and tr.k < k_max:
            x0c = x_prev
            cycle += 1
            run.restarts.append(tr.k + 1)
            continue
        break
    if not run.records:
        tr.add(x_start.copy(), 0, 0)
    return run
