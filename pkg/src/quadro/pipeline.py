"""Data generation, CSV ingestion, fitting, evaluation and cross-validation.

These are the library forms of the CLI subcommands.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .classify import empirical_rule
from .errors import DimensionMismatch, FoldTooSmall, InvalidSpec, ParseError, QuadroError
from .estimate import EstimatorConfig, fit_model
from .model import (
    LabeledDataset,
    QuadraticProjection,
    SolverConfig,
    TwoClassModel,
    active_features,
)
from .moments import rayleigh
from .oracle import sample_class
from .solve import SolverResult, solution_path, solve_quadro

ACTIVE_RTOL = 1e-6


def active_set(q: QuadraticProjection, rtol: float = ACTIVE_RTOL) -> list[int]:
    """Active features, ignoring entries below ``rtol`` times the largest one."""
    scale = max(np.abs(q.omega).max(initial=0.0), np.abs(q.delta).max(initial=0.0))
    return active_features(q, rtol * scale)


# -- simulation ---------------------------------------------------------------

def simulate(model: TwoClassModel, n: int, seed: int) -> LabeledDataset:
    """Draw n labelled rows; classes with kappa > 0 are multivariate t with df = 4 + 2/kappa."""
    if n < 2:
        raise InvalidSpec(f"need n >= 2, got {n}")
    rng = np.random.default_rng(seed)
    y = (rng.random(n) >= model.pi).astype(np.int64)
    x = np.empty((n, model.d))
    for label, c in enumerate(model.classes):
        if c.kappa < 0:
            raise InvalidSpec("simulation supports kappa >= 0 only")
        df = None if c.kappa == 0 else 4 + 2 / c.kappa
        mask = y == label
        x[mask] = sample_class(c, int(mask.sum()), rng, df)
    return LabeledDataset(x, y)


# -- CSV ----------------------------------------------------------------------

def write_dataset(data: LabeledDataset, prefix) -> tuple[Path, Path]:
    prefix = str(prefix)
    xp, yp = Path(prefix + "_X.csv"), Path(prefix + "_y.csv")
    header = ",".join(f"x{j + 1}" for j in range(data.d))
    np.savetxt(xp, data.x, delimiter=",", header=header, comments="", fmt="%.17g")
    np.savetxt(yp, data.y, header="y", comments="", fmt="%d")
    return xp, yp


def _read_csv(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    try:
        fh = path.open(newline="")
    except FileNotFoundError as exc:
        raise ParseError(f"no such file: {path}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise ParseError(f"{path}:{line_no}: non-numeric field") from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError(f"{path}:{line_no}: NaN or Inf value")
            rows.append(vals)
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))


def read_dataset(x_path, y_path) -> LabeledDataset:
    _, x = _read_csv(x_path)
    _, y = _read_csv(y_path)
    if y.shape[1] != 1:
        raise ParseError(f"{y_path}: label file must have exactly one column")
    y = y[:, 0]
    bad = np.flatnonzero((y != 0) & (y != 1))
    if bad.size:
        raise ParseError(f"{y_path}:{bad[0] + 2}: label must be 0 or 1")
    if len(y) != len(x):
        raise DimensionMismatch(f"{x_path} has {len(x)} rows but {y_path} has {len(y)}")
    return LabeledDataset(x, y.astype(np.int64))


# -- fitting and evaluation ---------------------------------------------------

def empirical_rayleigh(data: LabeledDataset, q: QuadraticProjection):
    """Plug-in (R, Rq) from class-wise means and variances of the scores."""
    x0, x1 = data.split()
    s0, s1 = q(x0), q(x1)
    pi = len(s0) / data.n
    den = pi * s0.var() + (1 - pi) * s1.var()
    gap2 = (s0.mean() - s1.mean()) ** 2
    r = gap2 / den if den > 0 else (math.inf if gap2 > 0 else 0.0)
    return float(r), float(pi * (1 - pi) * r)


def evaluate(data: LabeledDataset, q: QuadraticProjection) -> dict:
    if q.d != data.d:
        raise DimensionMismatch(f"projection has d={q.d}, data has d={data.d}")
    r, rq = empirical_rayleigh(data, q)
    rule = empirical_rule(data, q)
    scores = q(data.x)

    def summary(s):
        return {"n": int(s.size), "mean": float(s.mean()), "std": float(s.std()),
                "min": float(s.min()), "max": float(s.max())}

    return {
        "rayleigh_R": r,
        "rayleigh_Rq": rq,
        "error": rule.error,
        "threshold": rule.threshold,
        "flipped": rule.flipped,
        "scores": {
            "all": summary(scores),
            "class0": summary(scores[data.y == 0]),
            "class1": summary(scores[data.y == 1]),
        },
    }


@dataclass
class FitOutput:
    model: TwoClassModel
    result: SolverResult
    report: dict


def fit(data: LabeledDataset, est: EstimatorConfig = EstimatorConfig(),
        solver: SolverConfig = SolverConfig(), timing: bool = False) -> FitOutput:
    t0 = time.perf_counter()
    model = fit_model(data, est)
    result = solve_quadro(model, solver)
    elapsed = (time.perf_counter() - t0) * 1e3
    r, rq = rayleigh(model, result.projection)
    train = evaluate(data, result.projection)
    report = {
        "rayleigh_R": r,
        "rayleigh_Rq": rq,
        "train_rayleigh_R": train["rayleigh_R"],
        "train_error": train["error"],
        "objective": result.objective,
        "dual": result.dual,
        "feas_residual": result.feas_residual,
        "kkt_residual": result.kkt_residual,
        "iterations": result.iterations,
        "inner_iterations": result.inner_iterations,
        "converged": result.converged,
        "active_features": [j + 1 for j in active_set(result.projection)],
        # wall time breaks byte-for-byte reproducibility, so it is opt-in
        "wall_time_ms": round(elapsed, 3) if timing else None,
    }
    return FitOutput(model, result, report)


# -- cross-validation ---------------------------------------------------------

def stratified_folds(y, k: int, seed: int) -> np.ndarray:
    """Fold id per row; each label is shuffled and dealt round-robin."""
    y = np.asarray(y)
    if k < 2:
        raise InvalidSpec("need at least two folds")
    for label in (0, 1):
        if np.sum(y == label) < k:
            raise FoldTooSmall(f"label {label} has {np.sum(y == label)} rows, fewer than k={k} folds")
    rng = np.random.default_rng(seed)
    folds = np.empty(len(y), dtype=np.int64)
    for label in (0, 1):
        idx = np.flatnonzero(y == label)
        folds[rng.permutation(idx)] = np.arange(len(idx)) % k
    return folds


def lambda_grid(n: int = 10, lam_max: float = 1.0, ratio: float = 1e-3):
    """Tied (lambda, lambda) pairs, geometric from lam_max down to lam_max * ratio."""
    lams = np.geomspace(lam_max, lam_max * ratio, n) if n > 1 else np.array([lam_max])
    return [(float(v), float(v)) for v in lams]


@dataclass
class CVOutput:
    best: tuple
    mean_R: list
    table: list  # (lambda_omega, lambda_delta, fold, R, err)
    refit: FitOutput


def cross_validate(data: LabeledDataset, grid, k: int = 5, seed: int = 0,
                   est: EstimatorConfig = EstimatorConfig(),
                   solver: SolverConfig = SolverConfig(), selection: str = "1se") -> CVOutput:
    """Pick a grid point by mean validation Rayleigh quotient.

    ``selection="max"`` takes the largest mean (ties to the larger penalty);
    ``"1se"`` takes the largest penalty whose mean is within one standard
    error of that maximum.
    """
    if selection not in ("max", "1se"):
        raise InvalidSpec(f"unknown selection rule {selection!r}")
    grid = [(float(a), float(b)) for a, b in grid]
    if not grid:
        raise InvalidSpec("lambda grid is empty")
    order = sorted(range(len(grid)), key=lambda i: -(grid[i][0] + grid[i][1]))
    folds = stratified_folds(data.y, k, seed)
    scores = np.full((len(grid), k), np.nan)
    errs = np.full((len(grid), k), np.nan)
    for f in range(k):
        train, valid = data.subset(folds != f), data.subset(folds == f)
        try:
            valid.split()
        except QuadroError as exc:
            raise FoldTooSmall(f"fold {f} misses a class") from exc
        model = fit_model(train, est)
        path = solution_path(model, [grid[i] for i in order], solver)
        for i, res in zip(order, path):
            scores[i, f], _ = empirical_rayleigh(valid, res.projection)
            errs[i, f] = empirical_rule(valid, res.projection).error
    mean_r = scores.mean(axis=1)
    # ties go to the larger penalty
    best_i = max(range(len(grid)), key=lambda i: (mean_r[i], grid[i][0] + grid[i][1], -i))
    if selection == "1se":
        se = scores[best_i].std(ddof=1) / np.sqrt(k)
        near = [i for i in range(len(grid)) if mean_r[i] >= mean_r[best_i] - se]
        best_i = max(near, key=lambda i: (grid[i][0] + grid[i][1], mean_r[i], -i))
    table = [(grid[i][0], grid[i][1], f, float(scores[i, f]), float(errs[i, f]))
             for i in range(len(grid)) for f in range(k)]
    best = grid[best_i]
    refit = fit(data, est, replace(solver, lambda_omega=best[0], lambda_delta=best[1]))
    return CVOutput(best, [float(v) for v in mean_r], table, refit)
