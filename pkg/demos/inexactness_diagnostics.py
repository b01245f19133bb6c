"""How far is the flexible factorization from the exact weighted problem?

The flexible solvers work with a mixture of all the weights seen so far,
not with the weights at the current iterate. On a small dense problem we
record, for every iteration, the true gap between the two gradients and
two computable upper bounds, and check whether the monotonicity
certificate (K > err) predicts a decrease of the smoothed l1 objective.

Run with ``python demos/inexactness_diagnostics.py``.
"""

import numpy as np

from flexgk.operators import DenseOperator
from flexgk.problems import Problem
from flexgk.restart import RestartPolicy
from flexgk.solvers import run_solver
from flexgk.weights import WeightPolicy


def main(seed=0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((40, 30))
    x = rng.standard_normal(30)
    b = A @ x
    bad = rng.choice(40, size=4, replace=False)
    b[bad] += rng.choice([-5.0, 5.0], size=4)
    prob = Problem(DenseOperator(A), b, x_true=x)

    run = run_solver(prob, "apd", WeightPolicy("lp", p=1.0, tau=0.1), 20,
                     RestartPolicy("weights"), diagnose=True)
    print(" cyc  k   grad gap    bound      loose     K          err        f decreased")
    for rep in run.reports:
        dec = rep.f_curr < rep.f_prev
        flag = "" if rep.monotonicity_K <= rep.monotonicity_err or dec else "  <- not certified"
        print(f" {rep.cycle:>3} {rep.k:>2}  {rep.grad_gap_true:.2e}  {rep.grad_gap_bound:.2e}  "
              f"{rep.grad_gap_bound_loose:.2e}  {rep.monotonicity_K:+.2e}  "
              f"{rep.monotonicity_err:.2e}  {dec}{flag}")
    print(f"\nrestarts at global iterations {run.restarts}; best relerr {run.best_relerr:.3e}")


if __name__ == "__main__":
    main()
