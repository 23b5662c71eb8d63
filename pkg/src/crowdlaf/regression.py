"""Ridge regression from encodings to counts, plus the evaluation metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyInput,
    InvalidConfig,
    LengthMismatch,
    ShapeMismatch,
    SingularSystem,
)


@dataclass(frozen=True)
class RegressionModel:
    """Linear count predictor: weights, unpenalized intercept, ridge strength."""

    weights: np.ndarray
    intercept: float
    ridge_lambda: float

    def __post_init__(self) -> None:
        weights = np.array(self.weights, copy=True)
        if weights.ndim != 1:
            raise ShapeMismatch(f"weights must be a vector, got shape {weights.shape}")
        if not np.isfinite(weights).all() or not math.isfinite(self.intercept):
            raise ShapeMismatch("model parameters must be finite")
        weights.flags.writeable = False
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]


def fit_regressor(
    features: np.ndarray, targets: np.ndarray, ridge_lambda: float
) -> RegressionModel:
    """Minimize sum((w.x + b - y)^2) + lambda * ||w||^2, intercept unpenalized.

    Solved by the normal equations on centered data, so the intercept falls
    out of the means. With lambda = 0 the design must have full column rank.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ShapeMismatch(
            f"expected (n, dim) features with n targets, got {x.shape} and {y.shape}"
        )
    if x.shape[0] < 2:
        raise ShapeMismatch("need at least two samples to fit a regressor")
    if not (np.isfinite(ridge_lambda) and ridge_lambda >= 0.0):
        raise InvalidConfig(f"ridge lambda must be >= 0, got {ridge_lambda!r}")

    x_mean = x.mean(axis=0)
    y_mean = float(y.mean())
    xc = x - x_mean
    yc = y - y_mean
    gram = xc.T @ xc
    if ridge_lambda == 0.0 and np.linalg.matrix_rank(xc) < x.shape[1]:
        raise SingularSystem("rank-deficient design with lambda = 0")
    gram[np.diag_indices_from(gram)] += ridge_lambda
    try:
        weights = np.linalg.solve(gram, xc.T @ yc)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    intercept = y_mean - float(weights @ x_mean)
    return RegressionModel(
        weights=weights, intercept=intercept, ridge_lambda=float(ridge_lambda)
    )


def predict(model: RegressionModel, encoding: np.ndarray) -> float:
    """Raw (real-valued) count estimate for one feature vector."""
    vec = np.asarray(encoding, dtype=np.float64)
    if vec.shape != (model.dim,):
        raise DimensionMismatch(
            f"expected a vector of length {model.dim}, got shape {vec.shape}"
        )
    return float(vec @ model.weights + model.intercept)


@dataclass(frozen=True)
class KernelRidgeModel:
    """RBF kernel ridge, kept as a parity option next to the linear default.

    Predictions are dual_coef-weighted kernel evaluations against the stored
    training inputs plus the training-mean intercept.
    """

    support: np.ndarray
    dual_coef: np.ndarray
    intercept: float
    gamma: float
    ridge_lambda: float

    def __post_init__(self) -> None:
        support = np.array(self.support, dtype=np.float64, copy=True)
        dual_coef = np.array(self.dual_coef, dtype=np.float64, copy=True)
        if support.ndim != 2 or dual_coef.shape != (support.shape[0],):
            raise ShapeMismatch("one dual coefficient per support vector expected")
        support.flags.writeable = False
        dual_coef.flags.writeable = False
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "dual_coef", dual_coef)

    @property
    def dim(self) -> int:
        return self.support.shape[1]


def _rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    a2 = np.einsum("ij,ij->i", a, a)[:, None]
    b2 = np.einsum("ij,ij->i", b, b)[None, :]
    d2 = np.maximum(a2 + b2 - 2.0 * (a @ b.T), 0.0)
    return np.exp(-gamma * d2)


def fit_kernel_ridge(
    features: np.ndarray,
    targets: np.ndarray,
    ridge_lambda: float,
    gamma: float | None = None,
) -> KernelRidgeModel:
    """Fit the RBF parity regressor: (K + lambda I) alpha = y - mean(y).

    gamma defaults to 1/dim. Targets are centered so the intercept is the
    training mean, mirroring the unpenalized intercept of the linear model.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ShapeMismatch(
            f"expected (n, dim) features with n targets, got {x.shape} and {y.shape}"
        )
    if x.shape[0] < 2:
        raise ShapeMismatch("need at least two samples to fit a regressor")
    if not (np.isfinite(ridge_lambda) and ridge_lambda >= 0.0):
        raise InvalidConfig(f"ridge lambda must be >= 0, got {ridge_lambda!r}")
    gamma = 1.0 / x.shape[1] if gamma is None else float(gamma)
    if gamma <= 0.0:
        raise InvalidConfig(f"gamma must be positive, got {gamma!r}")
    y_mean = float(y.mean())
    gram = _rbf_kernel(x, x, gamma)
    gram[np.diag_indices_from(gram)] += ridge_lambda
    try:
        dual = np.linalg.solve(gram, y - y_mean)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    return KernelRidgeModel(
        support=x, dual_coef=dual, intercept=y_mean,
        gamma=gamma, ridge_lambda=float(ridge_lambda),
    )


def predict_kernel(model: KernelRidgeModel, encoding: np.ndarray) -> float:
    vec = np.asarray(encoding, dtype=np.float64)
    if vec.shape != (model.dim,):
        raise DimensionMismatch(
            f"expected a vector of length {model.dim}, got shape {vec.shape}"
        )
    k = _rbf_kernel(vec[None, :], model.support, model.gamma)[0]
    return float(k @ model.dual_coef + model.intercept)


def rounded_count(value: float) -> int:
    """Nearest non-negative integer count (half-up, negatives clamp to 0)."""
    return max(0, int(math.floor(value + 0.5)))


@dataclass(frozen=True)
class MetricsReport:
    """Mean absolute and mean squared count error over a set of frames."""

    mae: float
    mse: float
    count: int
    residuals: np.ndarray

    def __post_init__(self) -> None:
        residuals = np.array(self.residuals, dtype=np.float64, copy=True)
        if residuals.shape != (self.count,):
            raise LengthMismatch("one residual per frame expected")
        residuals.flags.writeable = False
        object.__setattr__(self, "residuals", residuals)

    def format_record(self) -> str:
        return f"mae={self.mae!r} mse={self.mse!r} n={self.count}"


def score(truth: np.ndarray, predicted: np.ndarray) -> MetricsReport:
    """MAE and MSE between ground-truth and predicted counts.

    Residuals are stored as predicted - truth; both metrics are symmetric in
    the argument order.
    """
    y = np.asarray(truth, dtype=np.float64)
    y_hat = np.asarray(predicted, dtype=np.float64)
    if y.ndim != 1 or y_hat.ndim != 1:
        raise LengthMismatch("expected flat count vectors")
    if y.shape != y_hat.shape:
        raise LengthMismatch(f"length mismatch: {y.shape[0]} vs {y_hat.shape[0]}")
    if y.size == 0:
        raise EmptyInput("cannot score zero frames")
    residuals = y_hat - y
    return MetricsReport(
        mae=float(np.abs(residuals).mean()),
        mse=float((residuals**2).mean()),
        count=y.size,
        residuals=residuals,
    )
