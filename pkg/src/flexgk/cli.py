"""Command-line front end.

Subcommands
-----------
make-problem   build a deblurring or tomography problem bundle
solve          run one or more solvers and write histories and images
export-basis   write the first N solution/residual basis vectors of a run
diagnose       run one flexible solver with inexactness diagnostics

Exit codes: 0 ok, 1 numerical failure, 2 usage error. Options may also be
given in a ``key=value`` file passed with ``--config``; command-line flags
take precedence over the file, which takes precedence over the defaults.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import io
from .problems import Problem, make_deblur_problem, make_tomo_problem
from .restart import RestartPolicy
from .solvers import FGK_METHODS, METHODS, run_solver
from .operators import make_gaussian_blur, make_parallel_beam
from .weights import WeightPolicy

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _fraction(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {v}")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _methods(text):
    names = [t.strip() for t in text.split(",") if t.strip()]
    if not names:
        raise argparse.ArgumentTypeError("at least one method is required")
    bad = [n for n in names if n not in METHODS]
    if bad:
        raise argparse.ArgumentTypeError(
            f"unknown method(s) {', '.join(bad)}; choose from {', '.join(METHODS)}"
        )
    return names


def _add_solver_options(sp, multi=True):
    sp.add_argument("--problem-dir", required=True, help="bundle written by make-problem")
    if multi:
        sp.add_argument("--methods", type=_methods, default="lsqr,dap,apd",
                        help="comma-separated list from " + ", ".join(METHODS))
    else:
        sp.add_argument("--method", choices=FGK_METHODS, default="apd")
    sp.add_argument("--weights", choices=("lp", "identity"), default="lp")
    sp.add_argument("--p", type=float, default=1.0)
    sp.add_argument("--tau", type=float, default=1e-2)
    sp.add_argument("--k-max", type=_positive_int, default=100)
    sp.add_argument("--restart", choices=("none", "weights", "residual", "auto"), default="auto")
    sp.add_argument("--restart-tol", "--tol", dest="restart_tol", type=float, default=0.1,
                    help="residual restart tolerance")
    sp.add_argument("--max-cycles", type=_positive_int, default=10)
    sp.add_argument("--rest1-entrywise", action="store_true",
                    help="compare weight gaps per diagonal entry instead of by their max")
    sp.add_argument("--no-reorth", action="store_true",
                    help="single Gram-Schmidt pass, no reorthogonalization")
    sp.add_argument("--warm-start", type=_nonneg_int, default=0)
    sp.add_argument("--irls-inner", type=_positive_int, default=10)
    sp.add_argument("--irls-outer", type=_positive_int, default=20)
    sp.add_argument("--select-by-error", action="store_true")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flexgk", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    mp = sub.add_parser("make-problem", help="build a problem bundle")
    mp.add_argument("--problem", choices=("deblur", "tomo"), default="deblur")
    mp.add_argument("--side", type=_positive_int, default=64, help="deblur image side")
    mp.add_argument("--psf-sigma", type=float, default=2.0)
    mp.add_argument("--psf-halfwidth", type=_nonneg_int, default=6)
    mp.add_argument("--grid", type=_positive_int, default=32, help="tomography grid side")
    mp.add_argument("--angles", type=_positive_int, default=30)
    mp.add_argument("--rays", type=_positive_int, default=45)
    mp.add_argument("--noise-fraction", "--fraction", dest="fraction", type=_fraction,
                    default=0.1, help="salt-and-pepper fraction")
    mp.add_argument("--input", help="PGM image used as x_true instead of the built-in phantom")
    mp.add_argument("--seed", type=int, default=0)
    mp.add_argument("--out", required=True)

    sv = sub.add_parser("solve", help="run solvers on a bundle")
    _add_solver_options(sv)
    sv.add_argument("--diagnose", action="store_true", help="fill the bound columns")

    eb = sub.add_parser("export-basis", help="write basis vectors of a finished run")
    eb.add_argument("--run-dir", required=True, help="per-method directory written by solve")
    eb.add_argument("--n", type=_nonneg_int, default=4)
    eb.add_argument("--out", required=True)

    dg = sub.add_parser("diagnose", help="inexactness diagnostics for one flexible solver")
    _add_solver_options(dg, multi=False)

    for sp in (mp, sv, eb, dg):
        sp.add_argument("--config", help="key=value file with option defaults")
    return parser


def _find_config(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser, argv):
    """Parse ``argv`` with defaults taken from ``--config`` (flags still win)."""
    argv = list(sys.argv[1:] if argv is None else argv)
    path = _find_config(argv)
    command = next((t for t in argv if t in COMMANDS), None)
    if path is None or command is None:
        return parser.parse_args(argv)
    try:
        cfg = io.read_meta(path)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    sp = parser._subparsers._group_actions[0].choices[command]
    actions = {a.dest: a for a in sp._actions}
    defaults = {}
    for key, val in cfg.items():
        dest = key.replace("-", "_")
        if dest not in actions or dest in ("config", "help"):
            raise UsageError(f"unknown config key {key!r} for {command}")
        act = actions[dest]
        if isinstance(act, argparse._StoreTrueAction):
            defaults[dest] = val.lower() in ("1", "true", "yes", "on")
        else:
            act.required = False
            defaults[dest] = val
    sp.set_defaults(**defaults)
    return parser.parse_args(argv)


# ---- make-problem -------------------------------------------------------


def cmd_make_problem(args) -> int:
    x_image = None
    if args.input:
        try:
            levels = io.read_pgm(args.input).astype(float)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read input image {args.input}: {exc}") from None
        x_image = levels / max(levels.max(), 1.0)
    try:
        if args.problem == "deblur":
            prob = make_deblur_problem(args.side, args.psf_sigma, args.psf_halfwidth,
                                       args.fraction, args.seed, x_image=x_image)
        else:
            prob = make_tomo_problem(args.grid, args.angles, args.rays, args.fraction,
                                     args.seed, x_image=x_image)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    img = prob.x_true.reshape(prob.image_shape, order="F")
    io.write_pgm(out / "x_true.pgm", img)
    io.write_matrix_csv(out / "x_true.csv", img)
    io.write_matrix_csv(out / "b.csv", prob.b.reshape(prob.data_shape, order="F"))
    io.write_matrix_csv(out / "r_true.csv", prob.r_true.reshape(prob.data_shape, order="F"))
    meta = dict(prob.params)
    meta.update(
        image_rows=prob.image_shape[0], image_cols=prob.image_shape[1],
        data_rows=prob.data_shape[0], data_cols=prob.data_shape[1],
        noise=prob.noise_meta["kind"], fraction=prob.noise_meta["fraction"],
        seed=prob.noise_meta["seed"], corrupted=prob.noise_meta["corrupted"],
        collisions=prob.noise_meta["collisions"],
    )
    if args.problem == "tomo":
        meta["sinogram"] = f"{args.rays}x{args.angles}"
    io.write_meta(out / "meta.txt", meta)
    print(f"wrote {args.problem} problem to {out}")
    return EXIT_OK


def load_problem(path) -> Problem:
    """Rebuild a :class:`Problem` from a bundle directory."""
    path = Path(path)
    try:
        meta = io.read_meta(path / "meta.txt")
        x_img = io.read_matrix_csv(path / "x_true.csv")
        b_img = io.read_matrix_csv(path / "b.csv")
        r_img = io.read_matrix_csv(path / "r_true.csv")
    except OSError as exc:
        raise UsageError(f"cannot read problem bundle {path}: {exc}") from None
    kind = meta["problem"]
    if kind == "deblur":
        op = make_gaussian_blur(int(meta["side"]), float(meta["psf_sigma"]),
                                int(meta["psf_halfwidth"]))
    elif kind == "tomo":
        op = make_parallel_beam(int(meta["grid_n"]), int(meta["n_angles"]), int(meta["n_rays"]))
    else:
        raise UsageError(f"{path}: unknown problem kind {kind!r}")
    return Problem(
        op=op,
        b=b_img.ravel(order="F"),
        x_true=x_img.ravel(order="F"),
        r_true=r_img.ravel(order="F"),
        noise_meta={"kind": meta.get("noise"), "fraction": float(meta["fraction"])},
        image_shape=x_img.shape,
        data_shape=b_img.shape,
        params=meta,
    )


# ---- solve --------------------------------------------------------------


def _policy(args, prob):
    if args.weights == "identity":
        return WeightPolicy.identity(prob.op.rows)
    try:
        return WeightPolicy("lp", p=args.p, tau=args.tau)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _restart(args):
    try:
        return RestartPolicy(args.restart, tol=args.restart_tol, max_cycles=args.max_cycles,
                             entrywise=args.rest1_entrywise)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _run(args, prob, method, diagnose):
    return run_solver(
        prob, method, _policy(args, prob), args.k_max, _restart(args), args.seed,
        warm_start=args.warm_start, diagnose=diagnose,
        select_by_error=args.select_by_error, reorth=not args.no_reorth,
        irls_inner=args.irls_inner,
        irls_outer_max=args.irls_outer,
    )


def write_run(run, prob: Problem, out: Path):
    """History CSV, reconstruction, error and residual images, basis arrays."""
    out.mkdir(parents=True, exist_ok=True)
    io.write_history_csv(out / "history.csv", run)
    x_img = run.x_best.reshape(prob.image_shape, order="F")
    io.write_pgm(out / "x_best.pgm", x_img)
    io.write_matrix_csv(out / "x_best.csv", x_img)
    if prob.x_true is not None:
        err = np.sqrt(np.abs(run.x_best - prob.x_true)).reshape(prob.image_shape, order="F")
        io.write_pgm(out / "error_sqrt.pgm", err)
        io.write_matrix_csv(out / "error_sqrt.csv", err)
    res = prob.b - prob.op.apply(run.x_best)
    res_img = res.reshape(prob.data_shape, order="F")
    io.write_pgm(out / "residual.pgm", res_img)
    io.write_matrix_csv(out / "residual.csv", res_img)
    if prob.r_true is not None:
        rerr = (res - prob.r_true).reshape(prob.data_shape, order="F")
        io.write_pgm(out / "residual_error.pgm", rerr)
        io.write_matrix_csv(out / "residual_error.csv", rerr)
    arrays = {
        "image_shape": np.array(prob.image_shape),
        "data_shape": np.array(prob.data_shape),
    }
    if run.V is not None:
        arrays["V"] = run.V
    if run.Y is not None:
        arrays["Y"] = run.Y
    np.savez(out / "basis.npz", **arrays)
    io.write_meta(out / "run.txt", dict(run.config, status=run.status,
                                        restarts=" ".join(map(str, run.restarts))))


def _failed(run) -> bool:
    return run.status in ("breakdown", "degenerate") and not run.restarts


def cmd_solve(args) -> int:
    prob = load_problem(args.problem_dir)
    out = Path(args.out)
    code = EXIT_OK
    for method in args.methods:
        run = _run(args, prob, method, args.diagnose)
        write_run(run, prob, out / method)
        best = min(r.relerr for r in run.records) if prob.x_true is not None else float("nan")
        print(f"{method}: {len(run.records)} iterations, {len(run.restarts)} restarts, "
              f"status={run.status}, best relerr={best:.6g}")
        if _failed(run):
            code = EXIT_NUMERIC
    return code


# ---- export-basis -------------------------------------------------------


def cmd_export_basis(args) -> int:
    run_dir = Path(args.run_dir)
    try:
        data = np.load(run_dir / "basis.npz")
    except OSError as exc:
        raise UsageError(f"cannot read {run_dir / 'basis.npz'}: {exc}") from None
    if args.n == 0:
        return EXIT_OK
    panels = [("V", tuple(data["image_shape"])), ("Y", tuple(data["data_shape"]))]
    avail = max(data[name].shape[1] for name, _ in panels if name in data)
    if args.n > avail:
        raise UsageError(f"--n {args.n} exceeds the {avail} stored basis vectors (k+1)")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, shape in panels:
        if name not in data:
            continue
        B = data[name][:, : args.n]
        io.write_matrix_csv(out / f"{name}.csv", B)
        for j in range(B.shape[1]):
            io.write_pgm(out / f"{name}_{j + 1:03d}.pgm", B[:, j].reshape(shape, order="F"))
    return EXIT_OK


# ---- diagnose -----------------------------------------------------------

DIAG_COLUMNS = (
    "cycle", "k", "grad_gap_true", "grad_gap_bound", "grad_gap_bound_loose",
    "func_gap_true", "func_gap_bound", "monotonicity_K", "monotonicity_err",
    "f_prev", "f_curr",
)


def cmd_diagnose(args) -> int:
    prob = load_problem(args.problem_dir)
    run = _run(args, prob, args.method, True)
    out = Path(args.out)
    write_run(run, prob, out)
    viol = 0
    with open(out / "diagnostics.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DIAG_COLUMNS)
        for rep in run.reports:
            d = asdict(rep)
            w.writerow(["" if d[c] is None else repr(float(d[c])) for c in DIAG_COLUMNS])
            viol += rep.grad_gap_true > rep.grad_gap_bound * (1 + 1e-10) + 1e-14
    print(f"{args.method}: {len(run.reports)} diagnosed iterations, "
          f"{viol} gradient-bound violations, status={run.status}")
    return EXIT_NUMERIC if _failed(run) else EXIT_OK


COMMANDS = {
    "make-problem": cmd_make_problem,
    "solve": cmd_solve,
    "export-basis": cmd_export_basis,
    "diagnose": cmd_diagnose,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"flexgk: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:
        print(f"flexgk: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"flexgk: I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
