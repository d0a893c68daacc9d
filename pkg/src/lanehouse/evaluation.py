"""Error metrics, train/test splitting, k-fold grid search and model comparison."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .ingest import DesignMatrix
from .models import FitConfig, ModelError, fit_lasso, fit_mlr, fit_ridge
from .trees import ForestParams, TreeError, TreeParams, fit_decision_tree, fit_forest

FAMILIES = ("mlr", "ridge", "lasso", "tree", "forest")
SCORINGS = ("mse", "mae", "r2")


class EvaluationError(ValueError):
    pass


# ------------------------------------------------------------------- metrics
#
# Sums use math.fsum, which is exactly rounded and therefore independent of
# element order.


def _pair(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if y.shape != yhat.shape:
        raise EvaluationError(f"length mismatch: {y.size} targets vs {yhat.size} predictions")
    if y.size == 0:
        raise EvaluationError("metrics need at least one observation")
    return y, yhat


def mse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    r = y - yhat
    return math.fsum(r * r) / y.size


def mae(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return math.fsum(np.abs(y - yhat)) / y.size


def r_squared(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    if y.size < 2:
        raise EvaluationError("R² needs at least two observations")
    centered = y - math.fsum(y) / y.size
    sst = math.fsum(centered * centered)
    if sst == 0:
        raise EvaluationError("undefined R² (zero variance)")
    r = y - yhat
    return 1.0 - math.fsum(r * r) / sst


@dataclass(frozen=True, eq=False)
class MetricsReport:
    mse: float
    mae: float
    r_squared: float
    n: int
    residuals: np.ndarray = field(repr=False)

    def as_row(self) -> dict:
        return {"mse": self.mse, "mae": self.mae, "r_squared": self.r_squared, "n": self.n}


def evaluate(y, yhat) -> MetricsReport:
    y, yhat = _pair(y, yhat)
    return MetricsReport(mse(y, yhat), mae(y, yhat), r_squared(y, yhat), int(y.size), y - yhat)


# --------------------------------------------------------------------- split


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.2
    seed: int = 0
    shuffled: bool = True

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise EvaluationError("test_fraction must lie strictly between 0 and 1")


def _rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([k & ((1 << 64) - 1) for k in key])))


def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Train and test row indices; the test side is the tail of the (shuffled) order.

    The test size is ``floor(test_fraction * n + 0.5)`` (round half up).
    """
    n_test = math.floor(spec.test_fraction * n + 0.5)
    if n_test < 1 or n_test >= n:
        raise EvaluationError(f"split of {n} rows at fraction {spec.test_fraction} leaves a side empty")
    order = _rng(spec.seed).permutation(n) if spec.shuffled else np.arange(n)
    return order[: n - n_test], order[n - n_test:]


def train_test_split(d: DesignMatrix, spec: SplitSpec = SplitSpec()) -> tuple[DesignMatrix, DesignMatrix]:
    train_idx, test_idx = split_indices(d.n, spec)
    return d.take(train_idx), d.take(test_idx)


# ---------------------------------------------------------- model families


def _int(params, key, default):
    value = params.get(key, default)
    if isinstance(value, bool) or int(value) != value:
        raise EvaluationError(f"{key} must be an integer, got {value!r}")
    return int(value)


def fit_family(family: str, params: Mapping[str, Any], train: DesignMatrix, seed: int = 0):
    """Fit one model family with a flat parameter mapping; returns an object with ``predict``."""
    params = dict(params)
    try:
        if family == "mlr":
            return fit_mlr(train, standardize=bool(params.get("standardize", False)))
        if family in ("ridge", "lasso"):
            cfg = FitConfig(
                lam=float(params.get("lambda", 1.0)),
                tolerance=float(params.get("tolerance", 1e-8)),
                max_iterations=_int(params, "max_iterations", 100_000),
                standardize=bool(params.get("standardize", True)),
            )
            return fit_ridge(train, cfg) if family == "ridge" else fit_lasso(train, cfg)
        if family == "tree":
            tp = TreeParams(_int(params, "max_depth", 5), _int(params, "min_samples_leaf", 7),
                            _int(params, "min_samples_split", 2))
            return fit_decision_tree(train, tp)
        if family == "forest":
            tp = TreeParams(_int(params, "max_depth", 10), _int(params, "min_samples_leaf", 5),
                            _int(params, "min_samples_split", 10))
            fp = ForestParams(tp, _int(params, "n_estimators", 100),
                              float(params.get("feature_fraction", 1 / 3)),
                              _int(params, "seed", seed))
            return fit_forest(train, fp, n_jobs=_int(params, "n_jobs", 1))
    except (ModelError, TreeError) as exc:
        raise EvaluationError(f"{family}: {exc}") from None
    raise EvaluationError(f"unknown model family {family!r}")


# -------------------------------------------------------------- grid search


@dataclass(frozen=True)
class GridSpec:
    model_family: str
    grid: Mapping[str, Sequence[Any]] = field(default_factory=dict)
    folds: int = 5
    scoring: str = "mse"
    seed: int = 0

    def __post_init__(self):
        if self.model_family not in FAMILIES:
            raise EvaluationError(f"unknown model family {self.model_family!r}")
        if self.scoring not in SCORINGS:
            raise EvaluationError(f"unknown scoring {self.scoring!r}")
        if self.folds < 2:
            raise EvaluationError("need at least two folds")
        if self.model_family != "mlr" and not self.grid:
            raise EvaluationError(f"{self.model_family} needs a non-empty grid")
        for key, values in self.grid.items():
            if len(values) == 0:
                raise EvaluationError(f"grid axis {key!r} is empty")

    def points(self) -> list[dict]:
        keys = list(self.grid)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.grid[k] for k in keys))]


def _score(scoring: str, y, yhat) -> float:
    if scoring == "mse":
        return mse(y, yhat)
    if scoring == "mae":
        return mae(y, yhat)
    return r_squared(y, yhat)


def fold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    if folds > n:
        raise EvaluationError(f"cannot make {folds} folds from {n} rows")
    order = _rng(seed, 1).permutation(n)
    return np.array_split(order, folds)


@dataclass(frozen=True)
class GridResult:
    best_params: dict
    best_score: float
    cv_table: list[dict]

    def to_dict(self) -> dict:
        return {"best_params": self.best_params, "best_score": self.best_score, "cv_table": self.cv_table}


def grid_search(d: DesignMatrix, spec: GridSpec) -> GridResult:
    """k-fold cross-validated search; the first grid point wins ties."""
    points = spec.points()
    for point in points:
        _validate_point(spec.model_family, point)
    folds = fold_indices(d.n, spec.folds, spec.seed)
    all_rows = np.arange(d.n)
    table = []
    for point in points:
        scores = []
        for k, test_idx in enumerate(folds):
            train_idx = np.setdiff1d(all_rows, test_idx)
            model = fit_family(spec.model_family, point, d.take(train_idx), seed=spec.seed)
            scores.append(_score(spec.scoring, d.y[test_idx], model.predict(d.x[test_idx])))
        table.append({"params": point, "mean": math.fsum(scores) / len(scores), "folds": scores})
    better = (lambda a, b: a > b) if spec.scoring == "r2" else (lambda a, b: a < b)
    best = table[0]
    for row in table[1:]:
        if better(row["mean"], best["mean"]):
            best = row
    return GridResult(dict(best["params"]), best["mean"], table)


def _validate_point(family: str, point: Mapping[str, Any]) -> None:
    for key in ("lambda", "tolerance"):
        if key in point and not float(point[key]) >= 0:
            raise EvaluationError(f"invalid {key}={point[key]!r} for {family}")
    for key in ("max_depth", "min_samples_leaf", "n_estimators", "max_iterations"):
        if key in point and int(point[key]) < 1:
            raise EvaluationError(f"invalid {key}={point[key]!r} for {family}")
    if "min_samples_split" in point and int(point["min_samples_split"]) < 2:
        raise EvaluationError(f"invalid min_samples_split={point['min_samples_split']!r}")
    if "feature_fraction" in point and not 0 < float(point["feature_fraction"]) <= 1:
        raise EvaluationError(f"invalid feature_fraction={point['feature_fraction']!r}")


# ---------------------------------------------------------------- compare


@dataclass(frozen=True)
class ModelConfig:
    label: str
    family: str
    params: Mapping[str, Any] = field(default_factory=dict)


@dataclass
class ComparisonTable:
    rows: list[dict]
    winners: dict

    def to_dict(self) -> dict:
        return {"rows": self.rows, "winners": self.winners}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_markdown(self) -> str:
        return comparison_markdown(self.rows, self.winners)


def _winners(rows: list[dict]) -> dict:
    ok = [r for r in rows if r.get("error") is None]
    if not ok:
        return {}
    out = {}
    for metric, better in (("mse", min), ("mae", min), ("r_squared", max)):
        target = better(r[metric] for r in ok)
        out[metric] = next(r["label"] for r in ok if r[metric] == target)
    return out


def compare_models(d: DesignMatrix, split: SplitSpec, configs: Sequence[ModelConfig]) -> ComparisonTable:
    """Fit every config on one shared split and score it on the held-out rows."""
    if not configs:
        raise EvaluationError("compare_models needs at least one config")
    train, test = train_test_split(d, split)
    rows = []
    for cfg in configs:
        try:
            model = fit_family(cfg.family, cfg.params, train, seed=split.seed)
            report = evaluate(test.y, model.predict(test.x))
        except (EvaluationError, ValueError) as exc:
            rows.append({"label": cfg.label, "family": cfg.family, "params": dict(cfg.params),
                         "mse": None, "mae": None, "r_squared": None, "error": str(exc)})
            continue
        rows.append({"label": cfg.label, "family": cfg.family, "params": dict(cfg.params),
                     "mse": report.mse, "mae": report.mae, "r_squared": report.r_squared,
                     "n_test": report.n, "error": None})
    return ComparisonTable(rows, _winners(rows))


def format_sci(value: float | None) -> str:
    """``4.83e+7`` style: three significant digits, no exponent padding."""
    if value is None:
        return "n/a"
    mantissa, exp = f"{value:.2e}".split("e")
    return f"{mantissa}e{exp[0]}{int(exp[1:])}"


def comparison_markdown(rows: Sequence[Mapping], winners: Mapping | None = None) -> str:
    winners = winners or {}
    lines = ["| | MSE | MAE | R Squared |", "|---|---|---|---|"]
    for r in rows:
        if r.get("error"):
            lines.append(f"| {r['label']} | n/a | n/a | n/a |")
            continue
        cells = [format_sci(r["mse"]), format_sci(r["mae"]), f"{r['r_squared']:.2f}"]
        for i, metric in enumerate(("mse", "mae", "r_squared")):
            if winners.get(metric) == r["label"]:
                cells[i] = f"**{cells[i]}**"
        lines.append(f"| {r['label']} | " + " | ".join(cells) + " |")
    errors = [r for r in rows if r.get("error")]
    if errors:
        lines += ["", "Warnings:", ""]
        lines += [f"- {r['label']}: {r['error']}" for r in errors]
    return "\n".join(lines) + "\n"
