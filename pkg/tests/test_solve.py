import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import one_d_model, random_model
from quadro.errors import DidNotConverge, InfeasibleProblem, InvalidSpec, NonconvexObjective
from quadro.model import (
    ClassModel,
    QuadraticProjection,
    SolverConfig,
    TwoClassModel,
    figure1_model,
    make_class_model,
    sparse_d10_model,
)
from quadro.moments import linear_rq_direction, rayleigh
from quadro.pipeline import active_set
from quadro.solve import gap, smooth_objective, soft_threshold, solution_path, solve_quadro


# -- independent oracle: equality-constrained QP through its KKT system -----

def _basis(d):
    """Coordinates of the free parameters: upper triangle of Omega, then delta."""
    out = []
    for i in range(d):
        for j in range(i, d):
            om = np.zeros((d, d))
            om[i, j] = om[j, i] = 1.0
            out.append(QuadraticProjection(om, np.zeros(d)))
    for i in range(d):
        de = np.zeros(d)
        de[i] = 1.0
        out.append(QuadraticProjection(np.zeros((d, d)), de))
    return out


def qp_oracle(model):
    """Minimise D subject to gap = 1 with D's Hessian built by polarisation of D itself."""
    basis = _basis(model.d)
    p = len(basis)
    h = np.empty((p, p))
    for i in range(p):
        for j in range(p):
            # D is a quadratic form: D(u+v) - D(u-v) = 4 u'Hv/2 with H the Hessian
            h[i, j] = (smooth_objective(model, basis[i] + basis[j])
                       - smooth_objective(model, basis[i] + basis[j].scaled(-1))) / 2
    a = np.array([gap(model, b) for b in basis])
    kkt = np.block([[h, a[:, None]], [a[None, :], np.zeros((1, 1))]])
    sol = np.linalg.lstsq(kkt, np.r_[np.zeros(p), 1.0], rcond=None)[0]
    theta = sol[:p]
    q = QuadraticProjection.zeros(model.d)
    for t, b in zip(theta, basis):
        q = q + b.scaled(t)
    return q


def cosine(u, v):
    return float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))


# -- soft threshold, objective, gap -------------------------------------------

@pytest.mark.parametrize("v,t,out", [(3, 1, 2), (-0.5, 1, 0), (-2, 0.5, -1.5), (1.0, 1.0, 0.0), (-1.0, 1.0, 0.0)])
def test_soft_threshold(v, t, out):
    assert soft_threshold(v, t) == out


@given(st.floats(-1e6, 1e6), st.floats(0, 1e6))
def test_soft_threshold_is_prox(v, t):
    s = soft_threshold(v, t)
    assert abs(s) <= abs(v) and (s == 0 or np.sign(s) == np.sign(v))
    assert abs(abs(v) - abs(s) - min(abs(v), t)) <= 1e-9 * max(1.0, abs(v))


def test_smooth_objective_examples():
    model = one_d_model()
    assert smooth_objective(model, QuadraticProjection.zeros(1)) == 0
    assert smooth_objective(model, QuadraticProjection([[0.0]], [-0.5])) == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(10))
def test_smooth_objective_homogeneous(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, 3, kappa=(0.4, 0.0))
    a = rng.standard_normal((3, 3))
    q = QuadraticProjection(a + a.T, rng.standard_normal(3))
    c = rng.uniform(-5, 5)
    assert smooth_objective(model, q.scaled(c)) == pytest.approx(c * c * smooth_objective(model, q), rel=1e-12)


def test_gap_examples(rng):
    c = make_class_model([0.5, 1.0], [[1.0, 0.2], [0.2, 2.0]])
    same = TwoClassModel(0.3, c, c)
    for _ in range(5):
        a = rng.standard_normal((2, 2))
        assert gap(same, QuadraticProjection(a + a.T, rng.standard_normal(2))) == 0
    assert gap(figure1_model(), QuadraticProjection.linear([1.0, 0.0])) == pytest.approx(-1.28)


@pytest.mark.parametrize("seed", range(5))
def test_gap_is_linear(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, 3)
    a, b = rng.standard_normal((2, 3, 3))
    q1 = QuadraticProjection(a + a.T, rng.standard_normal(3))
    q2 = QuadraticProjection(b + b.T, rng.standard_normal(3))
    assert gap(model, q1 + q2) == pytest.approx(gap(model, q1) + gap(model, q2), rel=1e-12, abs=1e-12)


# -- solver ---------------------------------------------------------------------

def test_hand_kkt_instance():
    res = solve_quadro(one_d_model())
    assert res.projection.omega[0, 0] == pytest.approx(0.0, abs=1e-6)
    assert res.projection.delta[0] == pytest.approx(-0.5, abs=1e-6)
    assert res.dual == pytest.approx(-2.0, abs=1e-6)
    assert res.objective == pytest.approx(1.0, abs=1e-6)
    assert res.converged and res.trace


@pytest.mark.parametrize("seed", range(6))
def test_matches_qp_oracle(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, 2, kappa=(0.5 * (seed % 2), 0.0))
    res = solve_quadro(model)
    ref = qp_oracle(model)
    assert np.allclose(res.projection.omega, ref.omega, atol=1e-5)
    assert np.allclose(res.projection.delta, ref.delta, atol=1e-5)
    assert res.objective == pytest.approx(smooth_objective(model, ref), rel=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_equal_covariance_solution_is_linear(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, 4, pi=0.5, equal_cov=True)
    res = solve_quadro(model)
    om, de = res.projection.omega, res.projection.delta
    assert cosine(-2 * de, linear_rq_direction(model)) >= 0.999
    assert np.linalg.norm(om) <= 1e-6 * (1 + np.linalg.norm(de))


@pytest.mark.parametrize("seed", range(4))
def test_huge_penalty_gives_single_coordinate(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, 3)
    lam = 1e6
    res = solve_quadro(model, SolverConfig(lambda_omega=lam, lambda_delta=lam))
    # brute force over one-coordinate feasible points
    best = np.inf
    for b in _basis(3):
        g = gap(model, b)
        if g == 0:
            continue
        q = b.scaled(1 / g)
        best = min(best, smooth_objective(model, q) + lam * (np.abs(q.omega).sum() + np.abs(q.delta).sum()))
    assert res.objective == pytest.approx(best, rel=0.01)
    assert len(active_set(res.projection)) <= 2


def test_feasibility_kkt_and_duality():
    rng = np.random.default_rng(11)
    for lam in (0.0, 0.01, 0.1):
        model = random_model(rng, 3, kappa=(0.3, 0.1))
        cfg = SolverConfig(lambda_omega=lam, lambda_delta=lam)
        res = solve_quadro(model, cfg)
        assert res.converged
        assert res.feas_residual <= cfg.tol_feas
        assert res.kkt_residual <= 10 * cfg.tol_rel * (1 + abs(res.objective))
        r, _ = rayleigh(model, res.projection)
        d = smooth_objective(model, res.projection)
        # R = gap^2 / D and gap = 1 up to tol_feas
        assert r == pytest.approx(gap(model, res.projection) ** 2 / d, rel=1e-10)
        assert r == pytest.approx(1 / d, rel=1e-7)


def test_symmetry_after_every_outer_step():
    rng = np.random.default_rng(2)
    model = random_model(rng, 4, kappa=(0.2, 0.0))
    seen = []

    def check(outer, om, de):
        seen.append(outer)
        assert np.abs(om - om.T).max() <= 1e-14 * max(np.abs(om).max(), 1e-300)

    solve_quadro(model, SolverConfig(lambda_omega=0.02, lambda_delta=0.02), callback=check)
    assert seen


def test_backtracking_inner_descent_and_agreement():
    rng = np.random.default_rng(3)
    model = random_model(rng, 3)
    values = []
    cfg = SolverConfig(lambda_omega=0.05, lambda_delta=0.05, step_rule="backtracking")
    res_bt = solve_quadro(model, cfg, inner_hook=values.append)
    assert values
    # the hook sees one run per outer step; a rise can only appear where a new run starts
    rises = [i for i in range(1, len(values)) if values[i] > values[i - 1] + 1e-12 * abs(values[i - 1])]
    assert len(rises) < res_bt.iterations
    res_fx = solve_quadro(model, SolverConfig(lambda_omega=0.05, lambda_delta=0.05))
    assert res_bt.objective == pytest.approx(res_fx.objective, rel=1e-6)


@pytest.mark.filterwarnings("ignore::quadro.errors.DidNotConverge")
def test_backtracking_monotone_within_one_outer_step():
    rng = np.random.default_rng(4)
    model = random_model(rng, 3)
    values = []
    solve_quadro(model, SolverConfig(max_outer=1, step_rule="backtracking"), inner_hook=values.append)
    assert all(b <= a + 1e-12 * abs(a) for a, b in zip(values, values[1:]))


def test_nonconvex_rejected():
    # kappa below the elliptical bound, only reachable through the bare constructor
    model = TwoClassModel(0.5, ClassModel(np.zeros(2), np.eye(2), -0.9), ClassModel(np.ones(2), np.eye(2), -0.9))
    with pytest.raises(NonconvexObjective):
        solve_quadro(model)


def test_negative_kappa_within_bound_is_fine():
    model = TwoClassModel(0.5, make_class_model([0, 0], np.eye(2), -0.4), make_class_model([1, 0], np.eye(2), -0.2))
    assert solve_quadro(model).converged


def test_identical_classes_infeasible():
    c = make_class_model([0.0, 1.0], np.eye(2))
    with pytest.raises(InfeasibleProblem):
        solve_quadro(TwoClassModel(0.5, c, c))


def test_did_not_converge_warning():
    rng = np.random.default_rng(5)
    model = random_model(rng, 3)
    with pytest.warns(DidNotConverge):
        res = solve_quadro(model, SolverConfig(max_outer=1, max_inner=2, rho0=1e-3))
    assert not res.converged


def test_warm_start_from_optimum_is_immediate():
    model = figure1_model()
    res = solve_quadro(model)
    again = solve_quadro(model, init=res)
    assert again.iterations <= 2
    assert np.allclose(again.projection.delta, res.projection.delta, atol=1e-8)


def test_solution_path_examples():
    model = figure1_model()
    single = solution_path(model, [(0.0, 0.0)])[0]
    direct = solve_quadro(model)
    assert np.array_equal(single.projection.omega, direct.projection.omega)
    assert np.array_equal(single.projection.delta, direct.projection.delta)
    a, b = solution_path(model, [(0.1, 0.1), (0.1, 0.1)])
    assert np.allclose(a.projection.omega, b.projection.omega, atol=1e-8)
    assert np.allclose(a.projection.delta, b.projection.delta, atol=1e-8)
    with pytest.raises(InvalidSpec):
        solution_path(model, [(0.0, 0.0), (1.0, 1.0)])
    with pytest.raises(InvalidSpec):
        solution_path(model, [])


def test_solution_path_sparsity_monotone():
    model = sparse_d10_model()
    lams = np.geomspace(1.0, 1e-3, 12)
    path = solution_path(model, [(v, v) for v in lams])
    counts = [len(active_set(r.projection)) for r in path]
    steps = list(zip(counts, counts[1:]))
    assert sum(b >= a for a, b in steps) >= 0.9 * len(steps)
    # the population model is exactly sparse, so even small penalties keep the true support only
    assert counts[0] <= 3
    assert active_set(path[-1].projection) == [0, 1, 2]


@pytest.mark.parametrize("seed", range(3))
def test_rayleigh_close_to_grid_oracle(seed):
    from quadro.oracle import grid_search_rq
    rng = np.random.default_rng(seed)
    model = random_model(rng, 2, kappa=(0.3, 0.0))
    res = solve_quadro(model)
    _, r_grid = grid_search_rq(model, resolution=9)
    assert rayleigh(model, res.projection)[0] >= 0.99 * r_grid
