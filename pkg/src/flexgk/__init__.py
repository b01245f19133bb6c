"""Flexible and inexact Golub-Kahan solvers for reweighted least squares."""

from .diagnostics import (
    InexactnessReport,
    estimate_opnorm,
    functional_gap_bound,
    gradient_gap_bound,
    gradient_gap_bound_loose,
    monotonicity_margin,
)
from .fgk import (
    BreakdownError,
    FgkState,
    ZeroResidualError,
    error_apply,
    factorization_residuals,
    fgk_init,
    fgk_step,
    rbar_apply,
)
from .operators import (
    BlurOperator,
    ComposedOperator,
    DenseOperator,
    DiagonalOperator,
    Operator,
    TomoOperator,
    adjoint_consistency_check,
    apply,
    apply_adjoint,
    make_gaussian_blur,
    make_parallel_beam,
)
from .problems import (
    Problem,
    add_salt_pepper,
    make_deblur_problem,
    make_tomo_problem,
    relative_error,
)
from .restart import RestartPolicy, WeightsCriterion, check_restart_residual, check_restart_weights
from .solvers import (
    DegenerateProjectionError,
    IterationRecord,
    ProjectedSolution,
    SolverRun,
    irls_outer,
    reference_lsqr_fixed,
    run_solver,
    solve_projected_apd,
    solve_projected_dap,
    solve_projected_dap_lsmr,
)
from .weights import WeightPolicy, lp_weights, weights_at

__version__ = "0.1.0"
