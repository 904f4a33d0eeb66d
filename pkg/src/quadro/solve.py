"""Sparse Rayleigh quotient maximisation over quadratic projections.

R(q) is invariant to rescaling q, so maximising it is the same as

    minimise   D(Omega, delta) + lam_omega |Omega|_1 + lam_delta |delta|_1
    subject to gap(Omega, delta) = 1

where D is the prior-weighted within-class variance of Q(X) and gap is the
difference of class means.  D is a convex quadratic form and gap is linear,
so the program is convex.  It is solved by a linearised augmented Lagrangian
method: dual ascent on the single multiplier outside, proximal-gradient
steps (entrywise soft thresholding) inside.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DidNotConverge, InfeasibleProblem, InvalidSpec, NonconvexObjective, SingularPooledCovariance
from .model import QuadraticProjection, SolverConfig, TwoClassModel
from .moments import linear_rq_direction

RHO_MAX = 1e8
POWER_STEPS = 30
L_SAFETY = 1.1


def soft_threshold(v, t):
    """sign(v) max(|v| - t, 0), elementwise; exact ties |v| = t map to 0."""
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


class _Problem:
    """Precomputed pieces of D and gap for one model; parameters are (Omega, delta) pairs."""

    def __init__(self, model: TwoClassModel):
        self.model = model
        self.d = model.d
        c0, c1 = model.classes
        self.terms = [(w, c.sigma, c.mu, c.kappa) for w, c in zip(model.weights, model.classes)]
        # per-class gradient coefficients
        self._gterms = [
            (s, mu, 4 * w * (1 + kappa), 2 * w * kappa, 8 * w, kappa != 0)
            for w, s, mu, kappa in self.terms
        ]
        dmu = c0.mu - c1.mu
        self.a_omega = c0.sigma - c1.sigma + np.outer(c0.mu, c0.mu) - np.outer(c1.mu, c1.mu)
        self.a_omega = (self.a_omega + self.a_omega.T) / 2
        self.a_delta = -2 * dmu
        self.a_norm2 = np.sum(self.a_omega ** 2) + self.a_delta @ self.a_delta

    def D(self, om, de):
        total = 0.0
        for w, s, mu, kappa in self.terms:
            os_ = om @ s
            tr1 = np.trace(os_)
            b = om @ mu - de
            total += w * (2 * (1 + kappa) * np.sum(os_ * os_.T) + kappa * tr1 ** 2 + 4 * b @ s @ b)
        return float(total)

    def grad_D(self, om, de):
        g_om = 0.0
        g_de = 0.0
        for s, mu, c_quad, c_kurt, c_lin, has_kurt in self._gterms:
            sb = s @ (om @ mu - de)
            g = c_quad * (s @ om @ s) + c_lin * (sb[:, None] * mu)
            if has_kurt:
                g += (c_kurt * np.vdot(om, s)) * s
            g_om = g_om + g
            g_de = g_de - c_lin * sb
        return (g_om + g_om.T) * 0.5, g_de

    def gap(self, om, de):
        return float(np.vdot(om, self.a_omega) + de @ self.a_delta)

    def penalty(self, om, de, cfg: SolverConfig):
        return cfg.lambda_omega * np.abs(om).sum() + cfg.lambda_delta * np.abs(de).sum()

    def hess_vec(self, om, de, rho):
        g_om, g_de = self.grad_D(om, de)
        c = rho * self.gap(om, de)
        return g_om + c * self.a_omega, g_de + c * self.a_delta

    def curvature_bound(self, rho, start=None):
        """Power-iteration estimate of the largest Hessian eigenvalue of the smooth part."""
        if start is None:
            rng = np.random.default_rng(0)
            om = rng.standard_normal((self.d, self.d))
            om = (om + om.T) / 2
            de = rng.standard_normal(self.d)
        else:
            om, de = start
        lam = 0.0
        for _ in range(POWER_STEPS):
            nrm = np.sqrt(np.sum(om ** 2) + de @ de)
            if nrm == 0:
                break
            om, de = om / nrm, de / nrm
            h_om, h_de = self.hess_vec(om, de, rho)
            lam = np.sum(om * h_om) + de @ h_de
            om, de = h_om, h_de
        return max(L_SAFETY * lam, 1e-12), (om, de)

    def check_convex(self, n_probe=20, seed=0):
        if all(kappa >= 0 for _, _, _, kappa in self.terms):
            return
        rng = np.random.default_rng(seed)
        probes = []
        for _ in range(n_probe):
            om = rng.standard_normal((self.d, self.d))
            probes.append(((om + om.T) / 2, rng.standard_normal(self.d)))
        # Omega = pinv(Sigma_k) maximises the kurtosis term relative to the rest;
        # pair it with the delta that minimises the mean-dependent part
        pooled = sum(w * s for w, s, _, _ in self.terms)
        for _, s, _, kappa in self.terms:
            if kappa < 0:
                om = np.linalg.pinv(s, hermitian=True)
                rhs = sum(w * sk @ (om @ mu) for w, sk, mu, _ in self.terms)
                probes.append((om, np.linalg.lstsq(pooled, rhs, rcond=None)[0]))
        for om, de in probes:
            curv = 2 * self.D(om, de) / (np.sum(om ** 2) + de @ de)
            if curv < -1e-10:
                raise NonconvexObjective(f"negative curvature {curv:.3g} along a probe direction")


def smooth_objective(model: TwoClassModel, q: QuadraticProjection) -> float:
    """Prior-weighted within-class variance pi V0 + (1 - pi) V1."""
    prob = _Problem(model)
    prob.check_convex()
    return prob.D(q.omega, q.delta)


def gap(model: TwoClassModel, q: QuadraticProjection) -> float:
    """E[Q | Y=0] - E[Q | Y=1]; linear in (Omega, delta)."""
    return _Problem(model).gap(q.omega, q.delta)


@dataclass
class SolverResult:
    projection: QuadraticProjection
    dual: float
    feas_residual: float
    kkt_residual: float
    objective: float
    iterations: int
    inner_iterations: int = 0
    converged: bool = True
    rho: float = 1.0
    trace: list = field(default_factory=list)


def _kkt_residual(prob: _Problem, om, de, nu, cfg: SolverConfig):
    g_om, g_de = prob.grad_D(om, de)
    g_om = g_om + nu * prob.a_omega
    g_de = g_de + nu * prob.a_delta

    def part(x, g, lam):
        return np.where(x != 0, g + lam * np.sign(x), soft_threshold(g, lam))

    r_om = part(om, g_om, cfg.lambda_omega)
    r_de = part(de, g_de, cfg.lambda_delta)
    return float(np.sqrt(np.sum(r_om ** 2) + r_de @ r_de))


def _initial_point(prob: _Problem):
    model = prob.model
    om = np.zeros((prob.d, prob.d))
    try:
        de = -linear_rq_direction(model) / 2
        g = prob.gap(om, de)
        if np.isfinite(g) and g > 1e-12 * np.linalg.norm(prob.a_delta) * np.linalg.norm(de):
            return om, de / g
    except SingularPooledCovariance:
        pass
    dmu2 = prob.a_delta @ prob.a_delta / 4
    if dmu2 > 0:
        return om, prob.a_delta / (4 * dmu2)
    m2 = np.sum(prob.a_omega ** 2)
    if m2 > 0:
        return prob.a_omega / m2, np.zeros(prob.d)
    raise InfeasibleProblem("the two classes have equal means and covariances; every gap is zero")


def _inner_fixed(prob, om, de, nu, rho, L, cfg, tol, max_iter):
    """Accelerated proximal gradient with gradient-based restart."""
    t_om, t_de = cfg.lambda_omega / L, cfg.lambda_delta / L
    x_om, x_de = om, de
    y_om, y_de = om, de
    t = 1.0
    for k in range(1, max_iter + 1):
        g_om, g_de = prob.grad_D(y_om, y_de)
        c = nu + rho * (prob.gap(y_om, y_de) - 1)
        n_om = soft_threshold(y_om - (g_om + c * prob.a_omega) / L, t_om)
        n_om = (n_om + n_om.T) / 2
        n_de = soft_threshold(y_de - (g_de + c * prob.a_delta) / L, t_de)
        s_om, s_de = n_om - y_om, n_de - y_de
        gmap = L * np.sqrt(np.vdot(s_om, s_om) + s_de @ s_de)
        if gmap <= tol:
            return n_om, n_de, k
        # restart momentum when the step opposes the last move
        if np.vdot(s_om, n_om - x_om) + s_de @ (n_de - x_de) < 0:
            t = 1.0
            y_om, y_de = n_om, n_de
        else:
            t_next = (1 + np.sqrt(1 + 4 * t * t)) / 2
            beta = (t - 1) / t_next
            y_om = n_om + beta * (n_om - x_om)
            y_de = n_de + beta * (n_de - x_de)
            t = t_next
        x_om, x_de = n_om, n_de
    return x_om, x_de, max_iter


def _inner_backtracking(prob, om, de, nu, rho, L, cfg, tol, max_iter, hook=None):
    """Monotone FISTA with a backtracking curvature estimate.

    The composite value at the kept iterate never increases; ``hook`` (if
    given) receives it after every iteration.
    """

    def smooth(o, d_):
        r = prob.gap(o, d_) - 1
        return prob.D(o, d_) + nu * r + rho / 2 * r * r

    x_om, x_de = om, de
    F_x = smooth(om, de) + prob.penalty(om, de, cfg)
    y_om, y_de = om, de
    t = 1.0
    L_k = L
    for k in range(1, max_iter + 1):
        f_y = smooth(y_om, y_de)
        g_om, g_de = prob.grad_D(y_om, y_de)
        c = nu + rho * (prob.gap(y_om, y_de) - 1)
        g_om = g_om + c * prob.a_omega
        g_de = g_de + c * prob.a_delta
        while True:
            z_om = soft_threshold(y_om - g_om / L_k, cfg.lambda_omega / L_k)
            z_om = (z_om + z_om.T) / 2
            z_de = soft_threshold(y_de - g_de / L_k, cfg.lambda_delta / L_k)
            s_om, s_de = z_om - y_om, z_de - y_de
            step2 = np.vdot(s_om, s_om) + s_de @ s_de
            f_z = smooth(z_om, z_de)
            lin = np.vdot(g_om, s_om) + g_de @ s_de
            if f_z <= f_y + lin + L_k / 2 * step2 + 1e-12 * abs(f_y):
                break
            L_k *= 2
        F_z = f_z + prob.penalty(z_om, z_de, cfg)
        done = L_k * np.sqrt(step2) <= tol
        t_next = (1 + np.sqrt(1 + 4 * t * t)) / 2
        if F_z <= F_x:
            y_om = z_om + (t - 1) / t_next * (z_om - x_om)
            y_de = z_de + (t - 1) / t_next * (z_de - x_de)
            x_om, x_de, F_x = z_om, z_de, F_z
        else:
            y_om = x_om + t / t_next * (z_om - x_om)
            y_de = x_de + t / t_next * (z_de - x_de)
        t = t_next
        if hook is not None:
            hook(F_x)
        if done and F_z <= F_x:
            return x_om, x_de, k
    return x_om, x_de, max_iter


def solve_quadro(
    model: TwoClassModel,
    cfg: SolverConfig = SolverConfig(),
    init=None,
    dual0: float = 0.0,
    callback=None,
    inner_hook=None,
) -> SolverResult:
    """Solve the penalised, gap-constrained variance minimisation.

    ``init`` may be a :class:`QuadraticProjection` (or a previous
    :class:`SolverResult`, whose multiplier is then reused) for warm starts.
    ``callback(outer, omega, delta)`` runs after every outer iteration;
    ``inner_hook(value)`` receives the inner objective in backtracking mode.
    """
    prob = _Problem(model)
    prob.check_convex()
    if isinstance(init, SolverResult):
        dual0 = init.dual
        init = init.projection
    if init is None:
        om, de = _initial_point(prob)
    else:
        om, de = np.array(init.omega, dtype=float), np.array(init.delta, dtype=float)

    if cfg.step_rule == "fixed":
        inner = _inner_fixed
    else:
        def inner(*args):
            return _inner_backtracking(*args, hook=inner_hook)
    nu, rho = float(dual0), cfg.rho0
    L, vec = prob.curvature_bound(rho)
    obj_prev = prob.D(om, de) + prob.penalty(om, de, cfg)
    trace = []
    total_inner = 0
    converged = False
    outer = 0
    for outer in range(1, cfg.max_outer + 1):
        tol = cfg.tol_rel * (1 + abs(obj_prev))
        om, de, k = inner(prob, om, de, nu, rho, L, cfg, tol, cfg.max_inner)
        total_inner += k
        r = prob.gap(om, de) - 1
        nu += rho * r
        obj = prob.D(om, de) + prob.penalty(om, de, cfg)
        feas = abs(r)
        trace.append((outer, obj, feas))
        if callback is not None:
            callback(outer, om, de)
        if feas <= cfg.tol_feas and abs(obj - obj_prev) <= cfg.tol_rel * max(abs(obj), 1e-300) and k < cfg.max_inner:
            converged = True
            break
        obj_prev = obj
        new_rho = min(rho * cfg.rho_growth, RHO_MAX)
        if new_rho != rho:
            rho = new_rho
            L, vec = prob.curvature_bound(rho, vec)

    feas = abs(prob.gap(om, de) - 1)
    if not converged and feas > 10 * cfg.tol_feas:
        warnings.warn(f"solver stopped after {outer} outer iterations with |gap - 1| = {feas:.3g}", DidNotConverge)
    return SolverResult(
        projection=QuadraticProjection(om, de),
        dual=float(nu),
        feas_residual=feas,
        kkt_residual=_kkt_residual(prob, om, de, nu, cfg),
        objective=prob.D(om, de) + prob.penalty(om, de, cfg),
        iterations=outer,
        inner_iterations=total_inner,
        converged=converged,
        rho=rho,
        trace=trace,
    )


def solution_path(model: TwoClassModel, lambdas, cfg: SolverConfig = SolverConfig()):
    """Solve along a grid of (lambda_omega, lambda_delta) pairs, warm-starting each from the last."""
    lambdas = [(float(a), float(b)) for a, b in lambdas]
    if not lambdas:
        raise InvalidSpec("lambda grid is empty")
    sums = [a + b for a, b in lambdas]
    if any(s1 < s2 for s1, s2 in zip(sums, sums[1:])):
        raise InvalidSpec("lambda grid must be sorted by decreasing lambda_omega + lambda_delta")
    results = []
    prev = None
    for lam_om, lam_de in lambdas:
        res = solve_quadro(model, replace(cfg, lambda_omega=lam_om, lambda_delta=lam_de), init=prev)
        results.append(res)
        prev = res
    return results
