"""Classification errors of threshold rules h_c(x) = 1{Q(x) < c}.

Q(X) for a Gaussian class is a quadratic form in independent standard
normals after whitening and rotation:  Q = q0 + sum_i (lam_i w_i^2 + 2 beta_i w_i).
With at most two non-trivial components its CDF is a closed form (one
component) or a one-dimensional integral of closed forms (two components).
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy import integrate, optimize
from scipy.special import ndtr

from .errors import DimensionMismatch, EmptyClass, NonGaussianClass, UnequalCovariances, UnsupportedDimension, WrongOrientation
from .model import ClassModel, LabeledDataset, QuadraticProjection, TwoClassModel
from .moments import projection_mean, projection_variance, rayleigh


def std_normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def err_linear_common_cov(model: TwoClassModel, a) -> float:
    """Error of 1{a'x < c} at the midpoint threshold, common Gaussian covariance.

    Equals 1 - Phi(sqrt(R(a)) / 2).
    """
    a = np.asarray(a, dtype=float)
    c0, c1 = model.classes
    if a.shape != (model.d,):
        raise DimensionMismatch(f"direction has shape {a.shape}, expected ({model.d},)")
    s_scale = max(np.abs(c0.sigma).max(), np.abs(c1.sigma).max(), 1e-300)
    if np.abs(c0.sigma - c1.sigma).max() > 1e-8 * s_scale:
        raise UnequalCovariances("class covariances differ")
    proj_gap = a @ (c0.mu - c1.mu)
    if proj_gap < 0:
        raise WrongOrientation("need a'(mu0 - mu1) >= 0")
    if proj_gap == 0:
        # equal projected means: every midpoint rule errs half the time
        return 0.5
    r, _ = rayleigh(model, QuadraticProjection.linear(a))
    return 1.0 - std_normal_cdf(0.5 * math.sqrt(r))


class _GaussianQuadratic:
    """Law of Q(X) for X ~ N(mu, Sigma), reduced to independent components."""

    def __init__(self, c: ClassModel, q: QuadraticProjection):
        w, v = np.linalg.eigh(c.sigma)
        root = v * np.sqrt(np.clip(w, 0, None))
        a = root.T @ q.omega @ root
        lam, u = np.linalg.eigh((a + a.T) / 2)
        beta = u.T @ (root.T @ (q.omega @ c.mu - q.delta))
        self.q0 = float(q(c.mu))
        scale = max(np.abs(lam).max(initial=0.0), np.abs(beta).max(initial=0.0), 1e-300)
        tiny = np.abs(lam) <= 1e-12 * scale
        comps = [(float(l), float(b)) for l, b in zip(lam[~tiny], beta[~tiny])]
        # components without a square term merge into one Gaussian term
        b_lin = float(np.sqrt(np.sum(beta[tiny] ** 2)))
        if b_lin > 1e-12 * scale:
            comps.append((0.0, b_lin))
        self.comps = comps
        self.mean = projection_mean(c, q)
        self.sd = math.sqrt(projection_variance(c, q))

    @staticmethod
    def _cdf1(lam, beta, t):
        """P(lam w^2 + 2 beta w < t) for w ~ N(0, 1)."""
        if lam == 0.0:
            if beta == 0.0:
                return 1.0 if t > 0 else 0.0
            z = t / (2 * beta)
            return std_normal_cdf(z) if beta > 0 else 1.0 - std_normal_cdf(z)
        disc = beta * beta + lam * t
        if disc <= 0:
            return 0.0 if lam > 0 else 1.0
        root = math.sqrt(disc)
        # numerically stable roots of lam w^2 + 2 beta w - t
        s = -(beta + math.copysign(root, beta))
        r1, r2 = sorted((s / lam, -t / s if s != 0 else 0.0))
        inside = std_normal_cdf(r2) - std_normal_cdf(r1)
        return inside if lam > 0 else 1.0 - inside

    def cdf(self, c: float) -> float:
        """P(Q(X) < c)."""
        if c == math.inf:
            return 1.0
        if c == -math.inf:
            return 0.0
        t = c - self.q0
        if not self.comps:
            return 1.0 if t > 0 else 0.0
        if len(self.comps) == 1:
            return self._cdf1(*self.comps[0], t)
        if len(self.comps) > 2:
            raise UnsupportedDimension("quadrature supports at most two components")
        (l1, b1), (l2, b2) = self.comps

        def integrand(w):
            return math.exp(-0.5 * w * w) * self._cdf1(l2, b2, t - l1 * w * w - 2 * b1 * w)

        val, _ = integrate.quad(integrand, -12.0, 12.0, limit=400, epsabs=1e-11, epsrel=1e-10)
        return min(max(val / math.sqrt(2 * math.pi), 0.0), 1.0)


def _check_gaussian(model: TwoClassModel, q: QuadraticProjection):
    if model.d != q.d:
        raise DimensionMismatch(f"model has d={model.d}, projection has d={q.d}")
    if model.d > 2:
        raise UnsupportedDimension(f"exact error needs d <= 2, got d={model.d}")
    if any(c.kappa != 0 for c in model.classes):
        raise NonGaussianClass("exact error needs Gaussian classes (kappa = 0)")


def threshold_error(model: TwoClassModel, q: QuadraticProjection, c: float) -> float:
    """err(h_c) = pi P(Q < c | Y=0) + (1 - pi) P(Q >= c | Y=1), better orientation."""
    _check_gaussian(model, q)
    laws = [_GaussianQuadratic(cl, q) for cl in model.classes]
    return _oriented_error(model.pi, laws, c)


def _oriented_error(pi, laws, c):
    e = pi * laws[0].cdf(c) + (1 - pi) * (1 - laws[1].cdf(c))
    return min(e, 1 - e)


def best_threshold_error_1d(model: TwoClassModel, q: QuadraticProjection, grid_size: int = 400):
    """Minimum over thresholds c (and both label orientations) of err(h_c).

    Grid search over a window covering both class laws, then a bounded
    scalar search around the best grid point.  Returns ``(c, err)``.
    """
    _check_gaussian(model, q)
    if grid_size < 100:
        raise ValueError("grid_size must be at least 100")
    laws = [_GaussianQuadratic(cl, q) for cl in model.classes]
    lo = min(l.mean - 10 * l.sd for l in laws)
    hi = max(l.mean + 10 * l.sd for l in laws)
    if hi <= lo:
        hi = lo + 1.0

    def f(c):
        return _oriented_error(model.pi, laws, c)

    grid = np.linspace(lo, hi, grid_size)
    vals = np.array([f(c) for c in grid])
    i = int(np.argmin(vals))
    best_c, best_e = float(grid[i]), float(vals[i])
    # Brent's bounded search (golden section with parabolic steps) over the
    # neighbouring cells; unlike a strict bracket it tolerates flat ties
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid_size - 1)]
    res = optimize.minimize_scalar(f, bounds=(a, b), method="bounded", options={"xatol": 1e-10})
    if res.fun <= best_e:
        best_c, best_e = float(res.x), float(res.fun)
    # the constant rules are limits c -> +-inf
    for c in (-math.inf, math.inf):
        e = f(c)
        if e < best_e - 1e-15:
            best_c, best_e = c, e
    return best_c, best_e


class ThresholdRule(NamedTuple):
    threshold: float
    error: float
    flipped: bool  # False: predict Y=1 when Q(x) < threshold


def empirical_rule(data: LabeledDataset, q: QuadraticProjection) -> ThresholdRule:
    """Best threshold rule on the training scores (exhaustive over the n+1 cuts)."""
    data.split()
    scores = q(data.x)
    order = np.argsort(scores, kind="stable")
    s, y = scores[order], data.y[order]
    n = len(s)
    # cut positions: before each block of equal scores, and after the last
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    cuts = np.r_[starts, n]
    below0 = np.r_[0, np.cumsum(y == 0)][cuts]
    below1 = np.r_[0, np.cumsum(y == 1)][cuts]
    n1 = below1[-1]
    # predicted 1 below the cut: errors are class-0 points below + class-1 points above
    err = (below0 + (n1 - below1)) / n
    thresholds = np.empty(len(cuts))
    thresholds[0] = -np.inf
    thresholds[-1] = np.inf
    thresholds[1:-1] = (s[cuts[1:-1] - 1] + s[cuts[1:-1]]) / 2
    both = np.minimum(err, 1 - err)
    i = int(np.argmin(both))
    return ThresholdRule(float(thresholds[i]), float(both[i]), bool(1 - err[i] < err[i]))


def empirical_error(data: LabeledDataset, q: QuadraticProjection):
    """``(threshold, error)`` of the best empirical threshold rule."""
    rule = empirical_rule(data, q)
    return rule.threshold, rule.error


def predict(q: QuadraticProjection, rule: ThresholdRule, x) -> np.ndarray:
    below = q(x) < rule.threshold
    return np.where(below != rule.flipped, 1, 0)
