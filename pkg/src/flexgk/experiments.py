"""Desk-scale comparison runs on the deblurring and tomography problems.

Each function returns a dict mapping a label such as ``"dap+restart"`` to
the :class:`~flexgk.solvers.SolverRun`.
"""

from __future__ import annotations

from .problems import make_deblur_problem, make_tomo_problem
from .restart import RestartPolicy
from .solvers import run_solver
from .weights import WeightPolicy

__all__ = ["DEFAULT_TAU", "deblur_comparison", "tomo_comparison", "best_relerrs"]

DEFAULT_TAU = 1e-2


def _runs(prob, plan, policy, k_max, tol):
    out = {}
    for label, method, mode in plan:
        out[label] = run_solver(prob, method, policy, k_max, RestartPolicy(mode, tol=tol))
    return out


def deblur_comparison(seed: int, *, side: int = 64, k_max: int = 100, tau: float = DEFAULT_TAU,
                      p: float = 1.0, tol: float = 0.1, extended: bool = False):
    """Blurred image with 10% salt-and-pepper noise.

    All flexible methods restart on the weights criterion. ``extended``
    adds DAP-LSMR, IRLS and the weights-at-the-truth baseline.
    """
    prob = make_deblur_problem(side=side, noise_fraction=0.1, seed=seed)
    plan = [
        ("lsqr", "lsqr", "none"),
        ("dap", "dap", "none"),
        ("dap+restart", "dap", "weights"),
        ("apd", "apd", "none"),
        ("apd+restart", "apd", "weights"),
    ]
    if extended:
        plan += [
            ("dap_lsmr", "dap_lsmr", "none"),
            ("dap_lsmr+restart", "dap_lsmr", "weights"),
            ("irls", "irls", "none"),
            ("exact", "exact", "none"),
        ]
    return prob, _runs(prob, plan, WeightPolicy("lp", p=p, tau=tau), k_max, tol)


def tomo_comparison(seed: int, *, grid_n: int = 32, n_angles: int = 30, n_rays: int = 45,
                    k_max: int = 100, tau: float = DEFAULT_TAU, p: float = 1.0,
                    tol: float = 0.1, extended: bool = False):
    """Parallel-beam sinogram with 10% of the entries set to 0 or 1.

    APD restarts on the residual criterion, DAP and DAP-LSMR on the weights
    criterion.
    """
    prob = make_tomo_problem(grid_n, n_angles, n_rays, noise_fraction=0.1, seed=seed)
    plan = [
        ("lsqr", "lsqr", "none"),
        ("dap+restart", "dap", "weights"),
        ("dap_lsmr+restart", "dap_lsmr", "weights"),
        ("apd+restart", "apd", "residual"),
    ]
    if extended:
        plan += [
            ("dap", "dap", "none"),
            ("dap_lsmr", "dap_lsmr", "none"),
            ("apd", "apd", "none"),
            ("irls", "irls", "none"),
            ("exact", "exact", "none"),
        ]
    return prob, _runs(prob, plan, WeightPolicy("lp", p=p, tau=tau), k_max, tol)


def best_relerrs(runs: dict) -> dict:
    return {label: run.best_relerr for label, run in runs.items()}
