"""Slow, independent reference computations.

These never call the solver.  ``mc_moments`` samples Q(X) directly;
``grid_search_rq`` maximises R by brute force over a parameter grid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DimensionTooLarge, InvalidDf, InvalidSpec
from .model import ClassModel, QuadraticProjection, TwoClassModel
from .moments import MomentPair, rayleigh, rayleigh_batch

MC_MIN_DRAWS = 10_000
CHUNK = 500_000


@dataclass(frozen=True)
class MCMoments:
    mean: float
    variance: float
    mean_se: float
    variance_se: float

    @property
    def pair(self) -> MomentPair:
        return MomentPair(self.mean, self.variance)


def parse_family(family):
    """Accept ``"gaussian"``, ``"student_t(7)"``, ``"t7"`` or ``("student_t", 7)``.

    Returns ``None`` for Gaussian or the degrees of freedom.
    """
    if family is None or family == "gaussian":
        return None
    if isinstance(family, (tuple, list)):
        df = float(family[1])
    else:
        s = str(family).strip().lower()
        for prefix in ("student_t(", "t("):
            if s.startswith(prefix) and s.endswith(")"):
                s = s[len(prefix):-1]
                break
        else:
            s = s.removeprefix("student_t").removeprefix("t")
        try:
            df = float(s)
        except ValueError as exc:
            raise InvalidDf(f"unknown family {family!r}") from exc
    if not df > 4:
        raise InvalidDf(f"degrees of freedom must exceed 4 for finite fourth moments, got {df}")
    return df


def sqrt_factor(sigma: np.ndarray) -> np.ndarray:
    """A matrix A with A A' = sigma, valid for singular PSD sigma."""
    w, v = np.linalg.eigh(sigma)
    return v * np.sqrt(np.clip(w, 0, None))


def sample_class(c: ClassModel, n: int, rng: np.random.Generator, df=None) -> np.ndarray:
    """Draw n rows; with ``df`` a multivariate t rescaled to covariance sigma."""
    z = rng.standard_normal((n, c.d)) @ sqrt_factor(c.sigma).T
    if df is not None:
        w = (df - 2) / rng.chisquare(df, size=n)
        z *= np.sqrt(w)[:, None]
    return c.mu + z


def t_kappa(df: float) -> float:
    """Kurtosis parameter of a multivariate t with df degrees of freedom."""
    return 2.0 / (df - 4.0)


def mc_moments(c: ClassModel, q: QuadraticProjection, n: int, seed: int, family="gaussian") -> MCMoments:
    if n < MC_MIN_DRAWS:
        raise InvalidSpec(f"need at least {MC_MIN_DRAWS} draws, got {n}")
    if c.d != q.d:
        raise DimensionMismatch(f"class has d={c.d}, projection has d={q.d}")
    df = parse_family(family)
    rng = np.random.default_rng(seed)
    # shifted power sums keep the variance estimate stable when |mean| >> sd
    shift = None
    s1 = s2 = s3 = s4 = 0.0
    done = 0
    while done < n:
        m = min(CHUNK, n - done)
        v = q(sample_class(c, m, rng, df))
        if shift is None:
            shift = float(np.mean(v))
        u = v - shift
        u2 = u * u
        s1 += u.sum()
        s2 += u2.sum()
        s3 += (u2 * u).sum()
        s4 += (u2 * u2).sum()
        done += m
    m1 = s1 / n
    var = s2 / n - m1 ** 2
    m4 = s4 / n - 4 * m1 * s3 / n + 6 * m1 ** 2 * s2 / n - 3 * m1 ** 4
    var_unbiased = var * n / (n - 1)
    return MCMoments(
        mean=shift + m1,
        variance=var_unbiased,
        mean_se=float(np.sqrt(var / n)),
        variance_se=float(np.sqrt(max(m4 - var ** 2, 0.0) / n)),
    )


def _param_count(d, linear=False):
    return d if linear else d * (d + 1) // 2 + d


def _unpack(theta: np.ndarray, d: int):
    """Stack of parameter vectors -> (omegas, deltas).

    With d(d+1)/2 + d columns the leading ones fill the upper triangle of
    Omega; with d columns Omega is zero.
    """
    b = theta.shape[0]
    om = np.zeros((b, d, d))
    if theta.shape[1] == d:
        return om, theta
    iu = np.triu_indices(d)
    k = len(iu[0])
    om[:, iu[0], iu[1]] = theta[:, :k]
    om[:, iu[1], iu[0]] = theta[:, :k]
    return om, theta[:, k:]


def grid_search_rq(model: TwoClassModel, resolution: int = 11, refine_passes: int = 50,
                   batch: int = 200_000, linear: bool = False):
    """Brute-force maximiser of R over quadratic projections, d <= 3.

    R is scale invariant and even, so each candidate fixes one parameter to 1
    and places the others on a ``resolution``-point grid over [-3, 3]; every
    direction with the fixed coordinate largest in magnitude is covered.  The
    best grid point is polished by coordinate search with shrinking steps.
    ``linear=True`` searches delta alone with Omega = 0.
    Returns ``(projection, R)``.
    """
    d = model.d
    if d > 3:
        raise DimensionTooLarge(f"grid search supports d <= 3, got d={d}")
    p = _param_count(d, linear)
    axis = np.linspace(-3.0, 3.0, resolution)
    best_r, best_theta = -np.inf, None
    total = resolution ** (p - 1)
    for fixed in range(p):
        for start in range(0, total, batch):
            flat = np.arange(start, min(start + batch, total))
            if p == 1:
                chunk = np.empty((1, 0))
            else:
                chunk = axis[np.stack(np.unravel_index(flat, (resolution,) * (p - 1)), axis=1)]
            theta = np.insert(chunk, fixed, 1.0, axis=1)
            r = rayleigh_batch(model, *_unpack(theta, d))
            i = int(np.argmax(r))
            # ties keep the earliest candidate
            if r[i] > best_r:
                best_r, best_theta = float(r[i]), theta[i].copy()

    step = axis[1] - axis[0] if resolution > 1 else 1.0
    for _ in range(refine_passes):
        improved = False
        for j in range(p):
            trial = np.repeat(best_theta[None, :], 2, axis=0)
            trial[0, j] += step
            trial[1, j] -= step
            r = rayleigh_batch(model, *_unpack(trial, d))
            i = int(np.argmax(r))
            if r[i] > best_r:
                best_r, best_theta = float(r[i]), trial[i]
                improved = True
        if not improved:
            step /= 2
    om, de = _unpack(best_theta[None, :], d)
    q = QuadraticProjection(om[0], de[0])
    r, _ = rayleigh(model, q)
    return q, r
