"""From labelled data to a two-class elliptical model.

Means use coordinate-wise median-of-means; covariances use entrywise
truncated second moments of the centred rows; the kurtosis parameter comes
from the second moment of Mahalanobis norms.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyClass, EmptyDataset, InvalidSpec, SingularCovariance, TooFewRows
from .model import LabeledDataset, TwoClassModel, kappa_lower_bound, make_class_model

COND_MAX = 1e12
MAD_CONSISTENCY = 1.4826
PRODUCT_BUDGET = 20_000_000


@dataclass(frozen=True)
class EstimatorConfig:
    """``kurtosis`` is "auto" (estimate per class) or a fixed value for both classes."""

    method: str = "robust"
    mom_blocks: int = 5
    huber_c: float = 2.0
    psd_repair: str = "clip"
    kurtosis: object = "auto"
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("sample", "robust"):
            raise InvalidSpec(f"unknown estimator method {self.method!r}")
        if self.mom_blocks < 1:
            raise InvalidSpec("mom_blocks must be at least 1")
        if not self.huber_c > 0:
            raise InvalidSpec("huber_c must be positive")
        if self.psd_repair not in ("clip", "none"):
            raise InvalidSpec(f"unknown psd_repair {self.psd_repair!r}")
        if self.kurtosis != "auto":
            try:
                object.__setattr__(self, "kurtosis", float(self.kurtosis))
            except (TypeError, ValueError) as exc:
                raise InvalidSpec(f"kurtosis must be 'auto' or a number, got {self.kurtosis!r}") from exc


def estimate_prior(data: LabeledDataset) -> float:
    """Fraction of label 0, kept away from {0, 1} by 1/(n+2)."""
    n = data.n
    if n == 0:
        raise EmptyDataset("no observations")
    n0 = int(np.sum(data.y == 0))
    if n0 == 0 or n0 == n:
        raise EmptyClass("both labels must occur in the data")
    lo = 1.0 / (n + 2)
    return float(min(max(n0 / n, lo), 1 - lo))


def _canonical_shuffle(rows: np.ndarray, seed: int) -> np.ndarray:
    # sort first so the result depends on the multiset of rows, not their order
    order = np.lexsort(rows.T[::-1])
    perm = np.random.default_rng(seed).permutation(len(rows))
    return rows[order][perm]


def robust_mean(rows, cfg: EstimatorConfig = EstimatorConfig()) -> np.ndarray:
    rows = np.asarray(rows, dtype=float)
    k = cfg.mom_blocks
    if len(rows) < k or len(rows) == 0:
        raise TooFewRows(f"{len(rows)} rows cannot fill {k} blocks")
    if cfg.method == "sample" or k == 1:
        return rows.mean(axis=0)
    blocks = np.array_split(_canonical_shuffle(rows, cfg.seed), k)
    return np.median([b.mean(axis=0) for b in blocks], axis=0)


def truncation_level(products: np.ndarray, c: float, n_entries: int | None = None) -> np.ndarray:
    """Per-entry truncation level for an (n, ...) stack of products.

    A MAD scale of the products times ``c``, inflated by sqrt(n / log(n p))
    with p the number of entries (default: the columns given), so the
    truncation bias vanishes as n grows.
    """
    n = products.shape[0]
    med = np.median(products, axis=0)
    scale = MAD_CONSISTENCY * np.median(np.abs(products - med), axis=0)
    # fall back to the mean absolute product where more than half the products tie
    fallback = np.mean(np.abs(products), axis=0)
    scale = np.where(scale > 0, scale, fallback)
    p = max(n_entries or products[0].size, 1)
    return c * scale * np.sqrt(n / np.log(max(n * p, 3)))


def robust_covariance(rows, mu_hat, cfg: EstimatorConfig = EstimatorConfig()) -> np.ndarray:
    rows = np.asarray(rows, dtype=float)
    n, d = rows.shape
    if n < 2:
        raise TooFewRows("covariance needs at least two rows")
    z = rows - np.asarray(mu_hat, dtype=float)
    if cfg.method == "sample":
        cov = z.T @ z / (n - 1)
    else:
        iu = np.triu_indices(d)
        n_pairs = len(iu[0])
        upper = np.empty(n_pairs)
        step = max(1, PRODUCT_BUDGET // n)
        for lo in range(0, n_pairs, step):
            i, j = iu[0][lo:lo + step], iu[1][lo:lo + step]
            prods = z[:, i] * z[:, j]
            tau = truncation_level(prods, cfg.huber_c, n_entries=n_pairs)
            upper[lo:lo + step] = (np.sign(prods) * np.minimum(np.abs(prods), tau)).mean(axis=0)
        cov = np.zeros((d, d))
        cov[iu] = upper
        cov[(iu[1], iu[0])] = upper
    cov = (cov + cov.T) / 2
    if cfg.psd_repair == "clip":
        w, v = np.linalg.eigh(cov)
        if w[0] < 0:
            cov = (v * np.clip(w, 0, None)) @ v.T
            cov = (cov + cov.T) / 2
    return cov


def estimate_kurtosis(rows, mu_hat, sigma_hat) -> float:
    """kappa_hat = mean(s^2) / (d (d + 2)) - 1 with s the squared Mahalanobis norms."""
    rows = np.asarray(rows, dtype=float)
    n, d = rows.shape
    if n < d + 2:
        raise TooFewRows(f"kurtosis needs at least d + 2 = {d + 2} rows, got {n}")
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    if np.linalg.cond(sigma_hat) >= COND_MAX:
        raise SingularCovariance("covariance estimate is singular or ill-conditioned")
    z = rows - mu_hat
    s = np.einsum("ij,ij->i", z, np.linalg.solve(sigma_hat, z.T).T)
    return float(max(np.mean(s * s) / (d * (d + 2)) - 1, kappa_lower_bound(d)))


def _fit_class(rows, cfg: EstimatorConfig):
    mu = robust_mean(rows, cfg)
    sigma = robust_covariance(rows, mu, cfg)
    if cfg.kurtosis == "auto":
        kappa = estimate_kurtosis(rows, mu, sigma)
    else:
        kappa = cfg.kurtosis
    return make_class_model(mu, sigma, kappa)


def fit_model(data: LabeledDataset, cfg: EstimatorConfig = EstimatorConfig()) -> TwoClassModel:
    if data.n == 0:
        raise EmptyDataset("no observations")
    x0, x1 = data.split()
    need = max(2, cfg.mom_blocks if cfg.method == "robust" else 1, data.d + 2 if cfg.kurtosis == "auto" else 2)
    for k, rows in enumerate((x0, x1)):
        if len(rows) < need:
            raise TooFewRows(f"class {k} has {len(rows)} rows, need at least {need}")
    return TwoClassModel(estimate_prior(data), _fit_class(x0, cfg), _fit_class(x1, cfg))
