"""Closed-form moments of Q(X) under elliptical classes and the Rayleigh quotient.

For X = mu + Z with Z centred elliptical, cov(Z) = Sigma and
E[Z_i Z_j Z_k Z_l] = (1 + kappa)(S_ij S_kl + S_ik S_jl + S_il S_jk),

    E Q(X)   = tr(Omega Sigma) + mu' Omega mu - 2 delta' mu
    var Q(X) = 2(1 + kappa) tr((Omega Sigma)^2) + kappa tr(Omega Sigma)^2
               + 4 (Omega mu - delta)' Sigma (Omega mu - delta)

kappa = 0 gives Gaussian moments; a multivariate t with nu > 4 degrees of
freedom has kappa = 2 / (nu - 4).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateProjection, DimensionMismatch, InvalidKurtosis, SingularPooledCovariance
from .model import ClassModel, QuadraticProjection, TwoClassModel

DEN_RTOL = 1e-12
COND_MAX = 1e12


@dataclass(frozen=True)
class MomentPair:
    mean: float
    variance: float


def _check(c: ClassModel, q: QuadraticProjection):
    if c.d != q.d:
        raise DimensionMismatch(f"class has d={c.d}, projection has d={q.d}")


def projection_mean(c: ClassModel, q: QuadraticProjection) -> float:
    _check(c, q)
    om_mu = q.omega @ c.mu
    return float(np.sum(q.omega * c.sigma) + c.mu @ om_mu - 2 * q.delta @ c.mu)


def projection_variance(c: ClassModel, q: QuadraticProjection) -> float:
    _check(c, q)
    os_ = q.omega @ c.sigma
    tr1 = np.trace(os_)
    # tr((OS)^2) without forming the square
    tr2 = np.sum(os_ * os_.T)
    b = q.omega @ c.mu - q.delta
    var = 2 * (1 + c.kappa) * tr2 + c.kappa * tr1 ** 2 + 4 * b @ c.sigma @ b
    scale = 2 * abs(tr2) + abs(c.kappa) * tr1 ** 2 + 4 * abs(b @ c.sigma @ b)
    if var < -1e-12 * max(scale, 1e-300):
        raise InvalidKurtosis(f"negative variance {var:.3g} for kappa={c.kappa}")
    return float(max(var, 0.0))


def gaussian_projection_variance(c: ClassModel, q: QuadraticProjection) -> float:
    """Gaussian variance of Q(X) computed along an independent code path."""
    _check(c, q)
    s_om_s = c.sigma @ q.omega @ c.sigma
    lin = c.sigma @ (q.omega @ c.mu) - c.sigma @ q.delta
    b = q.omega @ c.mu - q.delta
    return float(2 * np.trace(q.omega @ s_om_s) + 4 * np.dot(b, lin))


def class_moments(c: ClassModel, q: QuadraticProjection) -> MomentPair:
    return MomentPair(projection_mean(c, q), projection_variance(c, q))


def rayleigh(model: TwoClassModel, q: QuadraticProjection):
    """Return ``(R, Rq)`` with Rq = pi (1 - pi) R."""
    m0, v0 = projection_mean(model.class0, q), projection_variance(model.class0, q)
    m1, v1 = projection_mean(model.class1, q), projection_variance(model.class1, q)
    pi = model.pi
    den = pi * v0 + (1 - pi) * v1
    if den <= DEN_RTOL * (abs(m0) + abs(m1) + 1) ** 2:
        raise DegenerateProjection(f"within-class variance {den:.3g} is numerically zero")
    r = (m0 - m1) ** 2 / den
    return r, pi * (1 - pi) * r


def rayleigh_batch(model: TwoClassModel, omegas: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """Vectorised R over a stack of projections; degenerate entries give 0.

    ``omegas`` has shape (B, d, d) and must be symmetric; ``deltas`` (B, d).
    """
    gaps = np.zeros(len(deltas))
    den = np.zeros(len(deltas))
    scale = np.zeros(len(deltas))
    for sign, w, c in zip((1.0, -1.0), model.weights, model.classes):
        os_ = omegas @ c.sigma
        tr1 = np.trace(os_, axis1=1, axis2=2)
        tr2 = np.einsum("bij,bji->b", os_, os_)
        b = omegas @ c.mu - deltas
        mean = tr1 + np.einsum("i,bij,j->b", c.mu, omegas, c.mu) - 2 * deltas @ c.mu
        var = 2 * (1 + c.kappa) * tr2 + c.kappa * tr1 ** 2 + 4 * np.einsum("bi,ij,bj->b", b, c.sigma, b)
        gaps += sign * mean
        den += w * var
        scale += np.abs(mean)
    ok = den > DEN_RTOL * (scale + 1) ** 2
    out = np.zeros(len(deltas))
    out[ok] = gaps[ok] ** 2 / den[ok]
    return out


def pooled_covariance(model: TwoClassModel) -> np.ndarray:
    return model.pi * model.class0.sigma + (1 - model.pi) * model.class1.sigma


def linear_rq_direction(model: TwoClassModel) -> np.ndarray:
    """Fisher direction (pooled Sigma)^{-1} (mu0 - mu1).

    Exact maximiser of the Rayleigh quotient over linear projections when the
    two covariances coincide.
    """
    pooled = pooled_covariance(model)
    if np.linalg.cond(pooled) >= COND_MAX:
        raise SingularPooledCovariance("pooled covariance is singular or ill-conditioned")
    return np.linalg.solve(pooled, model.class0.mu - model.class1.mu)
