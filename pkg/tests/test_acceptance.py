"""Acceptance criteria, one check per criterion.

Run with pytest (a summary line per criterion follows the test report) or
directly: ``python3 tests/test_acceptance.py``.
"""
import json
import math
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from conftest import ACCEPTANCE_LINES, random_spd  # noqa: E402

from quadro.classify import best_threshold_error_1d, err_linear_common_cov  # noqa: E402
from quadro.estimate import EstimatorConfig  # noqa: E402
from quadro.model import (  # noqa: E402
    SPARSE_D10_SUPPORT,
    QuadraticProjection,
    SolverConfig,
    TwoClassModel,
    figure1_model,
    make_class_model,
    marginal_model,
    sparse_d10_model,
)
from quadro.moments import class_moments, linear_rq_direction, rayleigh  # noqa: E402
from quadro.oracle import grid_search_rq, mc_moments, parse_family, t_kappa  # noqa: E402
from quadro.pipeline import active_set, cross_validate, fit, lambda_grid, simulate  # noqa: E402
from quadro.solve import solve_quadro  # noqa: E402

REF_ERRORS = (0.284, 0.295)
REF_R = (0.853, 0.923)
E = np.eye(2)

# every successful solver run made by criterion 6, checked by 6(d)
_SOLVER_RUNS = []


def _solve(model, cfg=SolverConfig()):
    res = solve_quadro(model, cfg)
    if res.converged:
        _SOLVER_RUNS.append((res, cfg))
    return res


def _record(tag, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {tag}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok, line


# -- checks -------------------------------------------------------------------

def ac1_figure1_errors():
    model = figure1_model()
    t0 = time.perf_counter()
    errs = [best_threshold_error_1d(model, QuadraticProjection.linear(e))[1] for e in E]
    elapsed = time.perf_counter() - t0
    ok = all(abs(e - p) <= 0.005 for e, p in zip(errs, REF_ERRORS)) and elapsed < 5
    return _record("AC1 figure-1 errors", ok,
                   f"err = {errs[0]:.4f}, {errs[1]:.4f} (reference 0.284, 0.295, tol 0.005); {elapsed:.2f}s (< 5s)")


def ac2_figure1_rayleigh():
    model = figure1_model()
    closed = [rayleigh(model, QuadraticProjection.linear(e))[0] for e in E]
    # hand arithmetic: squared mean gap over prior-weighted variance
    hand = [1.28 ** 2 / (0.55 * 1 + 0.45 * 3), 0.8 ** 2 / (0.55 * 1 + 0.45 / 3)]
    grid = [grid_search_rq(marginal_model(model, [j]), linear=True)[1] for j in range(2)]
    agree = all(abs(a - b) <= 1e-12 * b and abs(a - g) <= 1e-9 * g for a, b, g in zip(closed, hand, grid))
    near_ref = all(abs(r - p) <= 0.08 for r, p in zip(closed, REF_R))
    ok = agree and near_ref and closed[1] > closed[0]
    return _record("AC2 figure-1 Rayleigh quotients", ok,
                   f"R = {closed[0]:.4f}, {closed[1]:.4f} (grid {grid[0]:.4f}, {grid[1]:.4f}; "
                   f"reference 0.853, 0.923, tol 0.08); feature 2 > feature 1: {closed[1] > closed[0]}")


def ac3_selection_divergence():
    model = figure1_model()
    qs = [QuadraticProjection.linear(e) for e in E]
    by_r = 1 + int(np.argmax([rayleigh(model, q)[0] for q in qs]))
    by_err = 1 + int(np.argmin([best_threshold_error_1d(model, q)[1] for q in qs]))
    return _record("AC3 selection divergence", by_r == 2 and by_err == 1,
                   f"argmax R -> feature {by_r}, argmin error -> feature {by_err}")


def _moment_case(seed, family):
    rng = np.random.default_rng(seed)
    d = 3
    df = parse_family(family)
    kappa = 0.0 if df is None else t_kappa(df)
    c = make_class_model(rng.standard_normal(d), random_spd(rng, d), kappa)
    a = rng.standard_normal((d, d))
    q = QuadraticProjection((a + a.T) / 2, rng.standard_normal(d))
    return c, q


def ac4_moment_oracle(n=1_000_000):
    t0 = time.perf_counter()
    misses = []
    for family in ("gaussian", "student_t(7)", "student_t(10)"):
        for seed in range(20):
            c, q = _moment_case(seed, family)
            mc = mc_moments(c, q, n, seed=1000 + seed, family=family)
            closed = class_moments(c, q)
            zm = (mc.mean - closed.mean) / mc.mean_se
            zv = (mc.variance - closed.variance) / mc.variance_se
            if abs(zm) > 3 or abs(zv) > 3:
                misses.append(f"{family}/seed {seed}: z_mean {zm:.2f}, z_var {zv:.2f}")
    elapsed = time.perf_counter() - t0
    ok = not misses and elapsed < 60
    detail = f"60 cases within 3 se: {60 - len(misses)}/60; {elapsed:.1f}s (< 60s)"
    if misses:
        detail += "; misses: " + "; ".join(misses)
    return _record("AC4 moment formulas vs Monte Carlo", ok, detail)


def _equal_cov_model(seed, d=2):
    # a prior of 1/2 makes the midpoint threshold the optimal one
    rng = np.random.default_rng(seed)
    s = random_spd(rng, d)
    return TwoClassModel(0.5, make_class_model(rng.standard_normal(d), s), make_class_model(rng.standard_normal(d), s))


def ac5_error_identity():
    worst = 0.0
    for seed in range(10):
        model = _equal_cov_model(seed)
        a = linear_rq_direction(model)
        e1 = err_linear_common_cov(model, a)
        _, e2 = best_threshold_error_1d(model, QuadraticProjection.linear(a))
        worst = max(worst, abs(e1 - e2))
    return _record("AC5 error identity", worst <= 1e-4, f"max |difference| over 10 models = {worst:.2e} (tol 1e-4)")


def ac6a_hand_kkt():
    model = TwoClassModel(0.5, make_class_model([0.0], [[1.0]]), make_class_model([-1.0], [[1.0]]))
    res = _solve(model)
    got = (res.projection.omega[0, 0], res.projection.delta[0], res.dual)
    ok = all(abs(g - w) <= 1e-6 for g, w in zip(got, (0.0, -0.5, -2.0)))
    return _record("AC6a hand KKT instance", ok, "(omega, delta, nu) = ({:.2e}, {:.8f}, {:.8f})".format(*got))


def _rq_model(seed):
    rng = np.random.default_rng(seed)
    d = 2 if seed % 2 == 0 else 3
    kappa = rng.choice([0.0, 0.25, 1.0], size=2)
    return TwoClassModel(
        rng.uniform(0.3, 0.7),
        make_class_model(rng.standard_normal(d), random_spd(rng, d), kappa[0]),
        make_class_model(rng.standard_normal(d), random_spd(rng, d), kappa[1]),
    )


def ac6b_rayleigh_vs_grid():
    ratios = []
    for seed in range(10):
        model = _rq_model(seed)
        res = _solve(model)
        _, r_grid = grid_search_rq(model, resolution=11 if model.d == 2 else 5)
        ratios.append(rayleigh(model, res.projection)[0] / r_grid)
    return _record("AC6b solver R vs grid oracle", min(ratios) >= 0.99,
                   f"min R_solver / R_grid over 10 models (d = 2, 3) = {min(ratios):.4f} (>= 0.99)")


def ac6c_equal_covariance():
    worst_cos, worst_om = 1.0, 0.0
    for seed in range(10):
        model = _equal_cov_model(seed, d=4)
        res = _solve(model)
        de, om = res.projection.delta, res.projection.omega
        a = linear_rq_direction(model)
        worst_cos = min(worst_cos, float(-2 * de @ a / (np.linalg.norm(2 * de) * np.linalg.norm(a))))
        worst_om = max(worst_om, np.linalg.norm(om) / (1 + np.linalg.norm(de)))
    ok = worst_cos >= 0.999 and worst_om <= 1e-6
    return _record("AC6c equal covariances give the linear optimum", ok,
                   f"min cosine = {worst_cos:.6f} (>= 0.999), max |Omega|_F / (1 + |delta|) = {worst_om:.1e} (<= 1e-6)")


def ac6d_certificates():
    for lam in (0.01, 0.1):
        for seed in range(5):
            _solve(_rq_model(seed), SolverConfig(lambda_omega=lam, lambda_delta=lam))
    bad = [r for r, cfg in _SOLVER_RUNS
           if r.feas_residual > 1e-6 or r.kkt_residual > 10 * cfg.tol_rel * (1 + abs(r.objective))]
    return _record("AC6d feasibility and KKT certificates", not bad and len(_SOLVER_RUNS) > 0,
                   f"{len(_SOLVER_RUNS) - len(bad)}/{len(_SOLVER_RUNS)} successful runs satisfy |gap-1| <= 1e-6 "
                   f"and kkt <= 10 tol_rel (1 + |obj|)")


def ac7_sparse_recovery(reps=50, n_per_class=5000):
    model = sparse_d10_model()
    support = set(SPARSE_D10_SUPPORT)
    grid = lambda_grid(10, 1.0, 1e-3)
    hits, sizes = 0, []
    for seed in range(reps):
        data = simulate(model, 2 * n_per_class, seed=seed)
        out = cross_validate(data, grid, k=5, seed=seed)
        act = set(active_set(out.refit.result.projection))
        hits += support <= act
        sizes.append(len(act))
    med = float(np.median(sizes))
    ok = hits >= 0.8 * reps and med <= 6
    return _record("AC7 sparse recovery under CV", ok,
                   f"support recovered in {hits}/{reps} runs (>= {math.ceil(0.8 * reps)}), median active size {med:g} (<= 6)")


def ac8_robustness(reps=200, n=500):
    truth = sparse_d10_model()
    heavy = TwoClassModel(truth.pi, *[make_class_model(c.mu, c.sigma, t_kappa(7)) for c in truth.classes])
    wins = 0
    for seed in range(reps):
        data = simulate(heavy, n, seed=seed)
        r = {}
        for method in ("robust", "sample"):
            out = fit(data, EstimatorConfig(method=method, seed=seed))
            r[method] = rayleigh(heavy, out.result.projection)[0]
        wins += r["robust"] >= r["sample"]
    return _record("AC8 robust vs sample estimation under t(7)", wins >= 0.6 * reps,
                   f"robust fit has population R >= sample fit in {wins}/{reps} runs (>= {math.ceil(0.6 * reps)})")


def _cli(*args, cwd):
    return subprocess.run([sys.executable, "-m", "quadro", *map(str, args)], cwd=cwd,
                          capture_output=True, check=True).stdout


def ac9_determinism():
    outputs = []
    for _ in range(2):
        with tempfile.TemporaryDirectory() as tmp:
            files = {}
            _cli("simulate", "--preset", "sparse-d10", "--n", 400, "--seed", 5, "--out", "d", cwd=tmp)
            _cli("fit", "--x", "d_X.csv", "--y", "d_y.csv", "--lambda-omega", 0.05, "--lambda-delta", 0.05,
                 "--seed", 5, "--out", "f", cwd=tmp)
            files["eval.stdout"] = _cli("eval", "--projection", "f_projection.json", "--x", "d_X.csv",
                                        "--y", "d_y.csv", cwd=tmp)
            _cli("cv", "--x", "d_X.csv", "--y", "d_y.csv", "--n-lambda", 4, "--k", 3, "--seed", 5,
                 "--out", "cv", cwd=tmp)
            (Path(tmp) / "q.json").write_text(json.dumps({"omega": [[1.0, 0.5], [0.5, 0.0]], "delta": [0.2, -0.1]}))
            files["moments.stdout"] = _cli("oracle", "moments", "--preset", "figure1", "--projection", "q.json",
                                           "--n", 20000, "--seed", 5, "--family", "t7", cwd=tmp)
            files["grid.stdout"] = _cli("oracle", "grid", "--preset", "figure1", "--resolution", 7, cwd=tmp)
            files["figure1.stdout"] = _cli("oracle", "figure1", cwd=tmp)
            for p in sorted(Path(tmp).iterdir()):
                files[p.name] = p.read_bytes()
            outputs.append(files)
    a, b = outputs
    differ = sorted(k for k in a if a[k] != b.get(k))
    ok = not differ and a.keys() == b.keys()
    return _record("AC9 CLI determinism", ok,
                   f"{len(a) - len(differ)}/{len(a)} outputs bitwise identical across two runs"
                   + (f"; differ: {', '.join(differ)}" if differ else ""))


CHECKS = [ac1_figure1_errors, ac2_figure1_rayleigh, ac3_selection_divergence, ac4_moment_oracle,
          ac5_error_identity, ac6a_hand_kkt, ac6b_rayleigh_vs_grid, ac6c_equal_covariance,
          ac6d_certificates, ac7_sparse_recovery, ac8_robustness, ac9_determinism]


@pytest.mark.parametrize("check", CHECKS, ids=[c.__name__ for c in CHECKS])
def test_acceptance(check):
    ok, line = check()
    assert ok, line


if __name__ == "__main__":
    results = [check()[0] for check in CHECKS]
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
