"""Linear regressors: ordinary least squares, ridge and lasso.

All three share :class:`LinearModel`. Coefficients are stored in raw feature
units, so prediction is ``intercept + x @ coefficients`` regardless of
whether the fit standardised internally.

Penalty conventions (standardised space when ``standardize`` is on):

* ridge minimises ``RSS + lam * sum(b_j ** 2)``
* lasso minimises ``0.5 * RSS + lam * sum(|b_j|)``

The lasso half-factor makes the optimality conditions read
``z_j . r = lam * sign(b_j)`` and puts the all-zero threshold at
``lam_max = max_j |z_j . (y - mean(y))|``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .ingest import DesignMatrix
from .numerics import NumericsError, solve_least_squares, solve_ridge

MODEL_FORMAT = "lanehouse.linear_model"
MODEL_VERSION = 1


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class FitConfig:
    lam: float = 0.0
    tolerance: float = 1e-8
    max_iterations: int = 100_000
    standardize: bool = True

    def __post_init__(self):
        if not self.lam >= 0:
            raise ModelError(f"penalty must be non-negative, got {self.lam}")
        if not self.tolerance > 0:
            raise ModelError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ModelError("max_iterations must be at least 1")


@dataclass(frozen=True)
class Standardization:
    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        if np.any(self.scale <= 0):
            raise ModelError("standardization scales must be positive")

    def transform(self, x):
        return (x - self.mean) / self.scale


@dataclass(frozen=True, eq=False)
class LinearModel:
    kind: str
    intercept: float
    coefficients: np.ndarray
    feature_names: tuple[str, ...]
    standardization: Standardization | None = None
    converged: bool = True
    n_iterations: int = 0
    objective_history: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)

    def __post_init__(self):
        if len(self.coefficients) != len(self.feature_names):
            raise ModelError("coefficient count differs from feature_names")

    def predict(self, x) -> np.ndarray:
        return predict_linear(self, x)

    def standardized_coefficients(self) -> np.ndarray:
        """Coefficients on the internal standardised scale used by the penalty."""
        if self.standardization is None:
            return self.coefficients.copy()
        return self.coefficients * self.standardization.scale

    def to_dict(self) -> dict:
        std = None
        if self.standardization is not None:
            std = {"mean": self.standardization.mean.tolist(), "scale": self.standardization.scale.tolist()}
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": self.kind,
            "intercept": float(self.intercept),
            "coefficients": self.coefficients.tolist(),
            "feature_names": list(self.feature_names),
            "standardization": std,
            "converged": self.converged,
            "n_iterations": self.n_iterations,
        }

    @classmethod
    def from_dict(cls, doc) -> LinearModel:
        if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
            raise ModelError("not a version-1 linear model document")
        std = doc.get("standardization")
        if std is not None:
            std = Standardization(np.asarray(std["mean"], float), np.asarray(std["scale"], float))
        return cls(doc["kind"], float(doc["intercept"]), np.asarray(doc["coefficients"], float),
                   tuple(doc["feature_names"]), std, bool(doc["converged"]), int(doc["n_iterations"]))


def predict_linear(model: LinearModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != len(model.coefficients):
        raise ModelError(f"expected {len(model.coefficients)} columns, got {x.shape[1]}")
    return model.intercept + x @ model.coefficients


def _check_train(train: DesignMatrix, min_rows: int = 1) -> None:
    if train.n < min_rows or train.p < 1:
        raise ModelError(f"need at least {min_rows} row(s) and one feature, got {train.x.shape}")


def _standardize(x: np.ndarray, scale: bool) -> tuple[np.ndarray, Standardization, np.ndarray]:
    """Centre (and optionally scale) columns; returns z, stats and a constant-column mask."""
    mean = x.mean(axis=0)
    centered = x - mean
    sd = np.sqrt((centered ** 2).mean(axis=0))
    constant = sd == 0
    if scale:
        sd = np.where(constant, 1.0, sd)
    else:
        sd = np.ones_like(sd)
    z = centered / sd
    z[:, constant] = 0.0
    return z, Standardization(mean, sd), constant


def _to_raw(beta_std, stats: Standardization, y_mean: float) -> tuple[float, np.ndarray]:
    coef = beta_std / stats.scale
    return float(y_mean - stats.mean @ coef), coef


def fit_mlr(train: DesignMatrix, standardize: bool = False) -> LinearModel:
    """Least squares with an explicit ones column; minimum-norm under collinearity."""
    _check_train(train, 2)
    if standardize:
        z, stats, constant = _standardize(train.x, True)
        beta = solve_least_squares(np.column_stack([np.ones(train.n), z]), train.y)
        beta_std = np.where(constant, 0.0, beta[1:])
        coef = beta_std / stats.scale
        intercept = float(beta[0] - stats.mean @ coef)
        return LinearModel("mlr", intercept, coef, train.feature_names, stats)
    beta = solve_least_squares(np.column_stack([np.ones(train.n), train.x]), train.y)
    return LinearModel("mlr", float(beta[0]), beta[1:], train.feature_names)


def fit_ridge(train: DesignMatrix, cfg: FitConfig = FitConfig()) -> LinearModel:
    _check_train(train)
    try:
        if cfg.standardize:
            z, stats, constant = _standardize(train.x, True)
            beta = solve_ridge(np.column_stack([np.ones(train.n), z]), train.y, cfg.lam,
                               penalize_intercept=False)
            beta_std = np.where(constant, 0.0, beta[1:])
            coef = beta_std / stats.scale
            intercept = float(beta[0] - stats.mean @ coef)
            return LinearModel("ridge", intercept, coef, train.feature_names, stats)
        beta = solve_ridge(np.column_stack([np.ones(train.n), train.x]), train.y, cfg.lam,
                           penalize_intercept=False)
    except NumericsError as exc:
        raise ModelError(str(exc)) from None
    return LinearModel("ridge", float(beta[0]), beta[1:], train.feature_names)


def lasso_lambda_max(train: DesignMatrix, standardize: bool = True) -> float:
    """Smallest penalty at which every lasso coefficient is exactly zero."""
    z, _, _ = _standardize(train.x, standardize)
    return float(np.max(np.abs(z.T @ (train.y - train.y.mean()))))


def fit_lasso(train: DesignMatrix, cfg: FitConfig = FitConfig()) -> LinearModel:
    """Cyclic coordinate descent in fixed feature order.

    Stops once a full sweep moves no coefficient by more than
    ``cfg.tolerance * std(y)`` (standardised units) or after
    ``cfg.max_iterations`` sweeps; in the latter case the model comes back
    with ``converged=False`` instead of raising.
    """
    _check_train(train)
    z, stats, _ = _standardize(train.x, cfg.standardize)
    y_mean = float(train.y.mean())
    yc = train.y - y_mean
    y_scale = float(np.sqrt((yc ** 2).mean())) or 1.0
    beta = np.zeros(train.p)
    sweeps, converged, history = kernels.lasso_cd(
        z, yc, beta, cfg.lam, cfg.tolerance * y_scale, cfg.max_iterations
    )
    intercept, coef = _to_raw(beta, stats, y_mean)
    return LinearModel("lasso", intercept, coef, train.feature_names, stats,
                       converged=converged, n_iterations=sweeps, objective_history=history)


def lasso_objective(model: LinearModel, train: DesignMatrix, lam: float) -> float:
    """``0.5 * RSS + lam * ||b||_1`` with ``b`` on the model's standardised scale."""
    r = train.y - model.predict(train.x)
    return 0.5 * float(r @ r) + lam * float(np.abs(model.standardized_coefficients()).sum())


def ridge_objective(model: LinearModel, train: DesignMatrix, lam: float) -> float:
    r = train.y - model.predict(train.x)
    b = model.standardized_coefficients()
    return float(r @ r) + lam * float(b @ b)


def coefficient_table(model: LinearModel) -> list[tuple[str, float]]:
    return [("intercept", model.intercept)] + list(zip(model.feature_names, model.coefficients.tolist()))


def nonzero_count(model: LinearModel) -> int:
    return int(np.count_nonzero(model.coefficients))
