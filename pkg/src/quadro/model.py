"""Domain types: class models, quadratic projections, datasets, solver settings.

All arrays held by these types are read-only copies, so instances can be
shared freely.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyClass,
    InvalidKurtosis,
    InvalidSpec,
    NotPositiveSemidefinite,
    ParseError,
)

PSD_RTOL = 1e-10


def _frozen(a, ndim):
    a = np.array(a, dtype=float)
    if a.ndim != ndim:
        raise DimensionMismatch(f"expected a {ndim}-d array, got shape {a.shape}")
    a.setflags(write=False)
    return a


def kappa_lower_bound(d: int) -> float:
    """Smallest kurtosis parameter giving a valid elliptical fourth moment."""
    return -2.0 / (d + 2)


@dataclass(frozen=True)
class ClassModel:
    """Mean, covariance and elliptical kurtosis parameter of one class.

    Build instances through :func:`make_class_model`, which symmetrizes and
    validates; the bare constructor only freezes the arrays.
    """

    mu: np.ndarray
    sigma: np.ndarray
    kappa: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mu", _frozen(self.mu, 1))
        object.__setattr__(self, "sigma", _frozen(self.sigma, 2))
        object.__setattr__(self, "kappa", float(self.kappa))

    @property
    def d(self) -> int:
        return self.mu.shape[0]


def make_class_model(mu, sigma, kappa: float = 0.0) -> ClassModel:
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if mu.ndim != 1:
        raise DimensionMismatch(f"mu must be a vector, got shape {mu.shape}")
    d = mu.shape[0]
    if sigma.shape != (d, d):
        raise DimensionMismatch(f"sigma has shape {sigma.shape}, expected {(d, d)}")
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
        raise InvalidSpec("mu and sigma must be finite")
    sigma = (sigma + sigma.T) / 2
    eig = np.linalg.eigvalsh(sigma) if d else np.zeros(0)
    if d and eig[0] < -PSD_RTOL * max(abs(eig[-1]), abs(eig[0])):
        raise NotPositiveSemidefinite(f"smallest eigenvalue {eig[0]:.3g} is negative")
    kappa = float(kappa)
    if not np.isfinite(kappa) or kappa < kappa_lower_bound(d):
        raise InvalidKurtosis(f"kappa={kappa} is below the bound -2/(d+2)={kappa_lower_bound(d):.4g}")
    return ClassModel(mu, sigma, kappa)


@dataclass(frozen=True)
class TwoClassModel:
    """Two elliptical classes; ``pi`` is P(Y=0), the weight of ``class0``."""

    pi: float
    class0: ClassModel
    class1: ClassModel

    def __post_init__(self):
        pi = float(self.pi)
        if not 0.0 < pi < 1.0:
            raise InvalidSpec(f"pi must lie in (0, 1), got {pi}")
        if self.class0.d != self.class1.d:
            raise DimensionMismatch(f"classes have dimensions {self.class0.d} and {self.class1.d}")
        object.__setattr__(self, "pi", pi)

    @property
    def d(self) -> int:
        return self.class0.d

    @property
    def classes(self):
        return (self.class0, self.class1)

    @property
    def weights(self):
        return (self.pi, 1.0 - self.pi)


@dataclass(frozen=True)
class QuadraticProjection:
    """Q(x) = x' omega x - 2 delta' x, with omega stored dense and symmetric."""

    omega: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        omega = np.array(self.omega, dtype=float)
        delta = np.array(self.delta, dtype=float)
        if delta.ndim != 1 or omega.shape != (delta.shape[0],) * 2:
            raise DimensionMismatch(f"omega {omega.shape} and delta {delta.shape} disagree")
        omega = (omega + omega.T) / 2
        omega.setflags(write=False)
        delta.setflags(write=False)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "delta", delta)

    @classmethod
    def linear(cls, a) -> "QuadraticProjection":
        """The projection whose score is a' x."""
        a = np.asarray(a, dtype=float)
        return cls(np.zeros((a.size, a.size)), -a / 2)

    @classmethod
    def zeros(cls, d: int) -> "QuadraticProjection":
        return cls(np.zeros((d, d)), np.zeros(d))

    @property
    def d(self) -> int:
        return self.delta.shape[0]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise DimensionMismatch(f"data has {x.shape[-1]} columns, projection expects {self.d}")
        return np.einsum("...i,ij,...j->...", x, self.omega, x) - 2 * x @ self.delta

    def scaled(self, c: float) -> "QuadraticProjection":
        return QuadraticProjection(c * self.omega, c * self.delta)

    def __add__(self, other: "QuadraticProjection") -> "QuadraticProjection":
        return QuadraticProjection(self.omega + other.omega, self.delta + other.delta)


def projection_sparsity(q: QuadraticProjection, threshold: float = 0.0):
    """Count entries above ``threshold`` in absolute value.

    Returns ``(n_omega, n_delta)`` where ``n_omega`` counts the upper triangle
    (diagonal included) of omega.
    """
    big_omega = np.abs(q.omega) > threshold
    big_delta = np.abs(q.delta) > threshold
    return int(np.triu(big_omega).sum()), int(big_delta.sum())


def active_features(q: QuadraticProjection, threshold: float = 0.0) -> list[int]:
    """Zero-based indices of coordinates that Q depends on."""
    used = (np.abs(q.omega) > threshold).any(axis=0) | (np.abs(q.delta) > threshold)
    return [int(j) for j in np.flatnonzero(used)]


@dataclass(frozen=True)
class LabeledDataset:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        y = np.asarray(self.y)
        if x.ndim != 2:
            raise DimensionMismatch(f"x must be a matrix, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise DimensionMismatch(f"{x.shape[0]} rows but {y.size} labels")
        if not np.all(np.isfinite(x)):
            raise ParseError("x contains NaN or Inf")
        if not np.all((y == 0) | (y == 1)):
            raise ParseError("labels must be 0 or 1")
        y = y.astype(np.int64)
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def split(self):
        """Rows of class 0 and class 1; raises EmptyClass if either is missing."""
        x0, x1 = self.x[self.y == 0], self.x[self.y == 1]
        if len(x0) == 0 or len(x1) == 0:
            raise EmptyClass("both labels must occur in the data")
        return x0, x1

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.x[idx], self.y[idx])


@dataclass(frozen=True)
class SolverConfig:
    lambda_omega: float = 0.0
    lambda_delta: float = 0.0
    rho0: float = 1.0
    rho_growth: float = 2.0
    tol_feas: float = 1e-8
    tol_rel: float = 1e-7
    max_outer: int = 200
    max_inner: int = 20000
    step_rule: str = "fixed"

    def __post_init__(self):
        if self.lambda_omega < 0 or self.lambda_delta < 0:
            raise InvalidSpec("penalties must be non-negative")
        if self.rho0 <= 0 or self.rho_growth < 1:
            raise InvalidSpec("need rho0 > 0 and rho_growth >= 1")
        if self.tol_feas <= 0 or self.tol_rel <= 0:
            raise InvalidSpec("tolerances must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise InvalidSpec("iteration caps must be at least 1")
        if self.step_rule not in ("fixed", "backtracking"):
            raise InvalidSpec(f"unknown step rule {self.step_rule!r}")


def marginal_model(model: TwoClassModel, features) -> TwoClassModel:
    """The model of the sub-vector X[features]; elliptical families are closed under this."""
    idx = np.asarray(features, dtype=int)
    if idx.ndim != 1 or idx.size == 0 or idx.min() < 0 or idx.max() >= model.d:
        raise DimensionMismatch(f"feature indices {features!r} out of range for d={model.d}")
    return TwoClassModel(model.pi, *[
        ClassModel(c.mu[idx], c.sigma[np.ix_(idx, idx)], c.kappa) for c in model.classes
    ])


# -- JSON interchange -----------------------------------------------------------

def class_to_dict(c: ClassModel) -> dict:
    return {"mu": c.mu.tolist(), "sigma": c.sigma.tolist(), "kappa": c.kappa}


def model_to_dict(model: TwoClassModel) -> dict:
    return {
        "d": model.d,
        "pi": model.pi,
        "class0": class_to_dict(model.class0),
        "class1": class_to_dict(model.class1),
    }


def model_from_dict(obj: dict) -> TwoClassModel:
    try:
        classes = [
            make_class_model(obj[k]["mu"], obj[k]["sigma"], obj[k].get("kappa", 0.0))
            for k in ("class0", "class1")
        ]
        model = TwoClassModel(obj["pi"], *classes)
    except (KeyError, TypeError) as exc:
        raise InvalidSpec(f"malformed model JSON: {exc!r}") from exc
    if "d" in obj and int(obj["d"]) != model.d:
        raise DimensionMismatch(f"declared d={obj['d']} but arrays have d={model.d}")
    return model


def projection_to_dict(q: QuadraticProjection) -> dict:
    return {"omega": q.omega.tolist(), "delta": q.delta.tolist()}


def projection_from_dict(obj: dict) -> QuadraticProjection:
    try:
        return QuadraticProjection(obj["omega"], obj["delta"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidSpec(f"malformed projection JSON: {exc!r}") from exc


def write_json(obj: dict, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ParseError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc


def load_model(path) -> TwoClassModel:
    return model_from_dict(read_json(path))


def load_projection(path) -> QuadraticProjection:
    return projection_from_dict(read_json(path))


# -- presets ------------------------------------------------------------------

def figure1_model() -> TwoClassModel:
    """Two Gaussian features where the Rayleigh criterion and the error criterion disagree."""
    return TwoClassModel(
        0.55,
        make_class_model([0.0, 0.0], np.eye(2)),
        make_class_model([1.28, 0.8], np.diag([3.0, 1.0 / 3.0])),
    )


SPARSE_D10_SUPPORT = (0, 1, 2)


def sparse_d10_model() -> TwoClassModel:
    """d=10, balanced, signal on features 0-2 only.

    Feature 0 differs in mean, feature 1 in mean and variance, feature 2 in
    variance alone; the other seven are independent N(0, 1) in both classes.
    """
    d = 10
    mu1 = np.zeros(d)
    mu1[:2] = [0.8, 0.6]
    var1 = np.ones(d)
    var1[1:3] = [0.5, 2.5]
    return TwoClassModel(
        0.5,
        make_class_model(np.zeros(d), np.eye(d)),
        make_class_model(mu1, np.diag(var1)),
    )


PRESETS = {"figure1": figure1_model, "sparse-d10": sparse_d10_model}
