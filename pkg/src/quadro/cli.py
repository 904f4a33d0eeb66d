"""Command-line front end.

Subcommands: simulate, fit, eval, cv, oracle {moments, grid, figure1}.
Exit codes: 0 success, 2 bad input, 3 estimation failure, 4 solver failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .classify import best_threshold_error_1d
from .errors import InputError, InvalidSpec, QuadroError
from .estimate import EstimatorConfig
from .model import (
    PRESETS,
    QuadraticProjection,
    SolverConfig,
    load_model,
    load_projection,
    marginal_model,
    model_to_dict,
    projection_to_dict,
    write_json,
)
from .moments import class_moments, rayleigh
from .oracle import grid_search_rq, mc_moments, parse_family, t_kappa
from .pipeline import cross_validate, evaluate, fit, lambda_grid, read_dataset, simulate, write_dataset

SOLVER_DEFAULTS = SolverConfig()
EST_DEFAULTS = EstimatorConfig()


# -- argument parsing ---------------------------------------------------------

def _config_parent():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="JSON",
                   help="JSON object of option values (keys as the long flag names, '-' or '_'); "
                        "flags given on the command line win")
    return p


def _add_data(p):
    p.add_argument("--x", metavar="CSV", help="feature matrix with header x1..xd")
    p.add_argument("--y", metavar="CSV", help="labels (0/1) with header y")


def _add_estimator(p):
    g = p.add_argument_group("estimation")
    g.add_argument("--estimator", choices=["sample", "robust"], default=EST_DEFAULTS.method,
                   help="moment estimators (default: %(default)s)")
    g.add_argument("--kurtosis", default="auto",
                   help="'auto' estimates it per class; a number fixes it for both (default: auto)")
    g.add_argument("--mom-blocks", type=int, default=EST_DEFAULTS.mom_blocks,
                   help="median-of-means blocks for robust means (default: %(default)s)")
    g.add_argument("--huber-c", type=float, default=EST_DEFAULTS.huber_c,
                   help="truncation constant for robust covariances (default: %(default)s)")
    g.add_argument("--psd-repair", choices=["clip", "none"], default=EST_DEFAULTS.psd_repair,
                   help="eigenvalue clipping of covariance estimates (default: %(default)s)")
    g.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")


def _add_solver(p, penalties=True):
    g = p.add_argument_group("solver")
    if penalties:
        g.add_argument("--lambda-omega", type=float, default=SOLVER_DEFAULTS.lambda_omega,
                       help="L1 penalty on Omega (default: %(default)s)")
        g.add_argument("--lambda-delta", type=float, default=SOLVER_DEFAULTS.lambda_delta,
                       help="L1 penalty on delta (default: %(default)s)")
    g.add_argument("--rho0", type=float, default=SOLVER_DEFAULTS.rho0,
                   help="initial augmented Lagrangian penalty (default: %(default)s)")
    g.add_argument("--rho-growth", type=float, default=SOLVER_DEFAULTS.rho_growth,
                   help="growth factor of rho per outer step (default: %(default)s)")
    g.add_argument("--tol-feas", type=float, default=SOLVER_DEFAULTS.tol_feas,
                   help="tolerance on |gap - 1| (default: %(default)s)")
    g.add_argument("--tol-rel", type=float, default=SOLVER_DEFAULTS.tol_rel,
                   help="relative objective tolerance (default: %(default)s)")
    g.add_argument("--max-outer", type=int, default=SOLVER_DEFAULTS.max_outer,
                   help="outer iteration cap (default: %(default)s)")
    g.add_argument("--max-inner", type=int, default=SOLVER_DEFAULTS.max_inner,
                   help="inner iteration cap per outer step (default: %(default)s)")
    g.add_argument("--step-rule", choices=["fixed", "backtracking"], default=SOLVER_DEFAULTS.step_rule,
                   help="inner step size rule (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quadro",
        description="Sparse quadratic projections by Rayleigh quotient maximisation.",
        epilog="Exit codes: 0 success, 2 invalid input, 3 estimation failure, 4 solver failure.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    cfg = [_config_parent()]

    p = sub.add_parser("simulate", parents=cfg, help="draw a labelled dataset from a model",
                       description="Write <out>_X.csv and <out>_y.csv drawn from a model.")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=sorted(PRESETS), help="named model")
    src.add_argument("--model", metavar="JSON", help="model file")
    p.add_argument("--n", type=int, help="number of rows")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")
    p.add_argument("--out", metavar="PREFIX", help="output prefix")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=cfg, help="estimate a model and solve for a projection",
                       description="Write <out>_model.json, <out>_projection.json and <out>_report.json.")
    _add_data(p)
    _add_estimator(p)
    _add_solver(p)
    p.add_argument("--timing", action="store_true",
                   help="record wall time in the report (makes the report non-reproducible)")
    p.add_argument("--out", metavar="PREFIX", help="output prefix")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", parents=cfg, help="evaluate a projection on a dataset",
                       description="Empirical Rayleigh quotient, best threshold rule and score summaries.")
    p.add_argument("--projection", metavar="JSON", help="projection file")
    _add_data(p)
    p.add_argument("--out", metavar="JSON", help="report file (default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cv", parents=cfg, help="cross-validate the penalty level",
                       description="Write <out>_cv.csv, <out>_selection.json and the refit files "
                                   "<out>_model.json, <out>_projection.json, <out>_report.json.")
    _add_data(p)
    _add_estimator(p)
    _add_solver(p, penalties=False)
    g = p.add_argument_group("grid")
    g.add_argument("--n-lambda", type=int, default=10, help="grid points (default: %(default)s)")
    g.add_argument("--lambda-max", type=float, default=1.0, help="largest penalty (default: %(default)s)")
    g.add_argument("--lambda-ratio", type=float, default=1e-3,
                   help="smallest / largest penalty (default: %(default)s)")
    g.add_argument("--grid", metavar="PAIRS",
                   help="explicit grid 'lo:ld,lo:ld,...' of (lambda_omega, lambda_delta); overrides the above")
    p.add_argument("--k", type=int, default=5, help="folds (default: %(default)s)")
    p.add_argument("--selection", choices=["1se", "max"], default="1se",
                   help="'max' picks the best mean validation R; '1se' the largest penalty "
                        "within one standard error of it (default: %(default)s)")
    p.add_argument("--out", metavar="PREFIX", help="output prefix")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("oracle", help="independent reference computations")
    osub = p.add_subparsers(dest="oracle", metavar="ORACLE")
    osub.required = True

    q = osub.add_parser("moments", parents=cfg, help="Monte Carlo moments of Q(X) against the closed form")
    src = q.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=sorted(PRESETS), help="named model")
    src.add_argument("--model", metavar="JSON", help="model file")
    q.add_argument("--projection", metavar="JSON", help="projection file")
    q.add_argument("--label", type=int, choices=[0, 1], default=0, help="class (default: %(default)s)")
    q.add_argument("--family", default="gaussian",
                   help="'gaussian' or 'student_t(df)' for the sampling law (default: %(default)s)")
    q.add_argument("--n", type=int, default=1_000_000, help="draws (default: %(default)s)")
    q.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")
    q.add_argument("--out", metavar="JSON", help="report file (default: stdout)")
    q.set_defaults(func=cmd_oracle_moments)

    q = osub.add_parser("grid", parents=cfg, help="brute-force maximiser of R (d <= 3)")
    src = q.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=sorted(PRESETS), help="named model")
    src.add_argument("--model", metavar="JSON", help="model file")
    q.add_argument("--features", metavar="I,J", help="restrict to these 1-based features first")
    q.add_argument("--resolution", type=int, default=11, help="grid points per axis (default: %(default)s)")
    q.add_argument("--linear", action="store_true", help="search linear projections only (Omega = 0)")
    q.add_argument("--out", metavar="JSON", help="report file (default: stdout)")
    q.set_defaults(func=cmd_oracle_grid)

    q = osub.add_parser("figure1", parents=cfg,
                        help="single-feature Rayleigh quotients and errors on the figure1 preset")
    q.add_argument("--out", metavar="JSON", help="report file (default: stdout)")
    q.set_defaults(func=cmd_oracle_figure1)
    return parser


def _subparser_for(parser, argv_ns):
    """The innermost subparser that handled the command, for applying --config defaults."""
    node = parser
    for dest in ("command", "oracle"):
        name = getattr(argv_ns, dest, None)
        if name is None:
            break
        action = next(a for a in node._actions if isinstance(a, argparse._SubParsersAction))
        node = action.choices[name]
    return node


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            values = json.loads(path.read_text())
        except FileNotFoundError:
            raise InvalidSpec(f"no such config file: {path}") from None
        except json.JSONDecodeError as exc:
            raise InvalidSpec(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        if not isinstance(values, dict):
            raise InvalidSpec(f"{path}: config must be a JSON object")
        sub = _subparser_for(parser, args)
        known = {a.dest for a in sub._actions} - {"help", "config"}
        values = {k.replace("-", "_"): v for k, v in values.items()}
        unknown = sorted(set(values) - known)
        if unknown:
            raise InvalidSpec(f"{path}: unknown option(s) {', '.join(unknown)}")
        sub.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


def _need(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise InvalidSpec(f"{args.command}: missing required option(s) {flags}")


# -- helpers ------------------------------------------------------------------

def _model_from_args(args):
    if getattr(args, "preset", None):
        return PRESETS[args.preset]()
    if getattr(args, "model", None):
        return load_model(args.model)
    raise InvalidSpec("give either --preset or --model")


def _est_config(args) -> EstimatorConfig:
    return EstimatorConfig(method=args.estimator, mom_blocks=args.mom_blocks, huber_c=args.huber_c,
                           psd_repair=args.psd_repair, kurtosis=args.kurtosis, seed=args.seed)


def _solver_config(args) -> SolverConfig:
    return SolverConfig(
        lambda_omega=getattr(args, "lambda_omega", 0.0), lambda_delta=getattr(args, "lambda_delta", 0.0),
        rho0=args.rho0, rho_growth=args.rho_growth, tol_feas=args.tol_feas, tol_rel=args.tol_rel,
        max_outer=args.max_outer, max_inner=args.max_inner, step_rule=args.step_rule,
    )


def _emit(obj, out):
    if out:
        write_json(obj, out)
    else:
        sys.stdout.write(json.dumps(obj, indent=2) + "\n")


def _write_fit(prefix, out):
    write_json(model_to_dict(out.model), f"{prefix}_model.json")
    write_json(projection_to_dict(out.result.projection), f"{prefix}_projection.json")
    write_json(out.report, f"{prefix}_report.json")


def _parse_grid(text):
    grid = []
    for item in text.split(","):
        try:
            a, b = item.split(":")
            grid.append((float(a), float(b)))
        except ValueError:
            raise InvalidSpec(f"bad grid entry {item!r}; expected lambda_omega:lambda_delta") from None
    return grid


# -- commands -----------------------------------------------------------------

def cmd_simulate(args):
    _need(args, "n", "out")
    data = simulate(_model_from_args(args), args.n, args.seed)
    write_dataset(data, args.out)


def cmd_fit(args):
    _need(args, "x", "y", "out")
    data = read_dataset(args.x, args.y)
    out = fit(data, _est_config(args), _solver_config(args), timing=args.timing)
    _write_fit(args.out, out)


def cmd_eval(args):
    _need(args, "projection", "x", "y")
    q = load_projection(args.projection)
    data = read_dataset(args.x, args.y)
    _emit(evaluate(data, q), args.out)


def cmd_cv(args):
    _need(args, "x", "y", "out")
    data = read_dataset(args.x, args.y)
    grid = _parse_grid(args.grid) if args.grid else lambda_grid(args.n_lambda, args.lambda_max, args.lambda_ratio)
    res = cross_validate(data, grid, k=args.k, seed=args.seed, est=_est_config(args),
                         solver=_solver_config(args), selection=args.selection)
    with open(f"{args.out}_cv.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda_omega", "lambda_delta", "fold", "R", "err"])
        for lo, ld, f, r, e in res.table:
            w.writerow([repr(lo), repr(ld), f, repr(r), repr(e)])
    write_json({
        "selection": args.selection,
        "lambda_omega": res.best[0],
        "lambda_delta": res.best[1],
        "grid": [{"lambda_omega": g[0], "lambda_delta": g[1], "mean_R": m}
                 for g, m in zip(grid, res.mean_R)],
    }, f"{args.out}_selection.json")
    _write_fit(args.out, res.refit)


def cmd_oracle_moments(args):
    _need(args, "projection")
    model = _model_from_args(args)
    q = load_projection(args.projection)
    c = model.classes[args.label]
    mc = mc_moments(c, q, args.n, args.seed, args.family)
    # the closed form is evaluated at the kurtosis of the sampling family
    df = parse_family(args.family)
    c = replace(c, kappa=0.0 if df is None else t_kappa(df))
    closed = class_moments(c, q)
    _emit({
        "label": args.label,
        "family": args.family,
        "kappa": c.kappa,
        "closed_form": {"mean": closed.mean, "variance": closed.variance},
        "monte_carlo": {"mean": mc.mean, "variance": mc.variance,
                        "mean_se": mc.mean_se, "variance_se": mc.variance_se},
        "z_mean": (mc.mean - closed.mean) / mc.mean_se if mc.mean_se > 0 else None,
        "z_variance": (mc.variance - closed.variance) / mc.variance_se if mc.variance_se > 0 else None,
    }, args.out)


def cmd_oracle_grid(args):
    model = _model_from_args(args)
    if args.features:
        try:
            feats = [int(v) - 1 for v in args.features.split(",")]
        except ValueError:
            raise InvalidSpec(f"bad feature list {args.features!r}") from None
        model = marginal_model(model, feats)
    q, r = grid_search_rq(model, args.resolution, linear=args.linear)
    _emit({"R": r, "Rq": model.pi * (1 - model.pi) * r, "projection": projection_to_dict(q)}, args.out)


def figure1_table(resolution: int = 11) -> list[dict]:
    """Per-feature R (closed form and grid oracle) and best threshold error on the figure1 preset."""
    model = PRESETS["figure1"]()
    rows = []
    for j in range(model.d):
        sub = marginal_model(model, [j])
        r_closed, _ = rayleigh(sub, QuadraticProjection.linear([1.0]))
        _, r_grid_lin = grid_search_rq(sub, resolution, linear=True)
        _, r_grid = grid_search_rq(sub, resolution)
        e = np.zeros(model.d)
        e[j] = 1.0
        c, err = best_threshold_error_1d(model, QuadraticProjection.linear(e))
        rows.append({"feature": j + 1, "R_linear": r_closed, "R_grid_linear": r_grid_lin,
                     "R_grid_quadratic": r_grid,
                     "best_error": err, "threshold": c})
    return rows


def cmd_oracle_figure1(args):
    rows = figure1_table()
    _emit({
        "features": rows,
        "argmax_R_linear": 1 + int(np.argmax([r["R_linear"] for r in rows])),
        "argmin_error": 1 + int(np.argmin([r["best_error"] for r in rows])),
    }, args.out)


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        args.func(args)
    except QuadroError as exc:
        print(f"quadro: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"quadro: error: {exc}", file=sys.stderr)
        return InputError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
