import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lanehouse.evaluation import (
    ComparisonTable, EvaluationError, GridSpec, ModelConfig, SplitSpec, compare_models, comparison_markdown,
    evaluate, fit_family, fold_indices, format_sci, grid_search, mae, mse, r_squared, split_indices,
    train_test_split,
)

from conftest import make_dm, random_regression
from oracles import grid_points, round_half_up

# values on a 1e-3 grid keep squared residuals clear of float underflow
finite = st.integers(-10 ** 9, 10 ** 9).map(lambda v: v / 1000)


# ------------------------------------------------------------------- metrics


def test_metric_examples():
    assert mse([1, 2, 3], [1, 2, 3]) == 0
    assert mse([0, 0], [3, 4]) == 12.5
    assert mae([1, 2], [1, 2]) == 0
    assert mae([0, 0], [3, 4]) == 3.5
    assert r_squared([1, 2, 3], [1, 2, 3]) == 1.0
    assert r_squared([1, 2, 3], [2, 2, 2]) == 0.0


def test_metric_errors():
    with pytest.raises(EvaluationError, match="length mismatch"):
        mse([1, 2], [1])
    with pytest.raises(EvaluationError):
        mae([], [])
    with pytest.raises(EvaluationError, match=r"undefined R² \(zero variance\)"):
        r_squared([4, 4, 4], [1, 2, 3])


def test_report_fields():
    rep = evaluate([1.0, 2.0, 4.0], [1.5, 2.0, 3.0])
    assert rep.n == 3
    assert rep.residuals.tolist() == [-0.5, 0.0, 1.0]
    assert rep.mse == math.fsum(rep.residuals ** 2) / 3
    assert rep.mae == math.fsum(np.abs(rep.residuals)) / 3


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=2, max_size=40), st.randoms(use_true_random=False))
def test_metric_properties(pairs, rnd):
    y = np.array([a for a, _ in pairs])
    yhat = np.array([b for _, b in pairs])
    m, a = mse(y, yhat), mae(y, yhat)
    assert m >= 0 and a >= 0
    assert a <= math.sqrt(m) * (1 + 1e-12) + 1e-300
    order = list(range(len(pairs)))
    rnd.shuffle(order)
    assert mse(y[order], yhat[order]) == m
    assert mae(y[order], yhat[order]) == a
    if np.ptp(y) > 0:
        r2 = r_squared(y, yhat)
        assert r2 <= 1
        assert r_squared(y[order], yhat[order]) == r2
        baseline = mse(y, np.full_like(y, math.fsum(y) / len(y)))
        if baseline > 0:
            assert abs(r2 - (1 - m / baseline)) <= 1e-12 * max(1.0, abs(r2))


# --------------------------------------------------------------------- split


def test_split_sizes():
    train, test = split_indices(2549, SplitSpec(0.2, seed=1))
    assert (len(train), len(test)) == (2039, 510)
    assert round_half_up(0.2 * 2549) == 510


def test_split_round_half_up():
    _, test = split_indices(5, SplitSpec(0.5, shuffled=False))
    assert len(test) == 3


def test_unshuffled_tail():
    train, test = split_indices(5, SplitSpec(0.2, shuffled=False))
    assert test.tolist() == [4]
    assert train.tolist() == [0, 1, 2, 3]


@given(st.integers(2, 500), st.floats(0.05, 0.95), st.integers(0, 2 ** 63))
def test_split_partition(n, frac, seed):
    spec = SplitSpec(frac, seed=seed)
    try:
        train, test = split_indices(n, spec)
    except EvaluationError:
        assert round_half_up(frac * n) in (0, n)
        return
    assert len(test) == round_half_up(frac * n)
    assert sorted(train.tolist() + test.tolist()) == list(range(n))
    again = split_indices(n, spec)
    assert again[0].tolist() == train.tolist() and again[1].tolist() == test.tolist()


def test_split_degenerate():
    with pytest.raises(EvaluationError):
        split_indices(2, SplitSpec(0.1))
    with pytest.raises(EvaluationError):
        SplitSpec(1.0)


def test_train_test_split_rows(rng):
    d = random_regression(rng, 20, 2)
    tr, te = train_test_split(d, SplitSpec(0.25, seed=4))
    assert tr.n == 15 and te.n == 5
    assert sorted(tr.row_ids.tolist() + te.row_ids.tolist()) == list(range(20))


# --------------------------------------------------------------- grid search


def test_folds_partition():
    folds = fold_indices(23, 5, seed=3)
    assert sorted(np.concatenate(folds).tolist()) == list(range(23))
    assert [len(f) for f in folds] == [5, 5, 5, 4, 4]
    with pytest.raises(EvaluationError):
        fold_indices(3, 5, 0)


def test_singleton_grid(rng):
    d = random_regression(rng, 40, 3)
    res = grid_search(d, GridSpec("ridge", {"lambda": [3.0]}, folds=4))
    assert res.best_params == {"lambda": 3.0}
    assert len(res.cv_table) == 1 and len(res.cv_table[0]["folds"]) == 4


def test_ridge_grid_prefers_no_shrinkage(rng):
    d = random_regression(rng, 80, 3, noise=0.05)
    res = grid_search(d, GridSpec("ridge", {"lambda": [0.0, 1e12]}))
    assert res.best_params == {"lambda": 0.0}
    # recompute the winning score by hand
    folds = fold_indices(d.n, 5, 0)
    scores = []
    for f in folds:
        tr = d.take(np.setdiff1d(np.arange(d.n), f))
        m = fit_family("ridge", {"lambda": 0.0}, tr)
        scores.append(mse(d.y[f], m.predict(d.x[f])))
    assert res.best_score == math.fsum(scores) / 5


def test_grid_best_is_table_optimum(rng):
    d = random_regression(rng, 60, 3, noise=2.0)
    for scoring in ("mse", "mae", "r2"):
        res = grid_search(d, GridSpec("lasso", {"lambda": [0.1, 1.0, 10.0, 100.0]}, scoring=scoring, seed=2))
        means = [row["mean"] for row in res.cv_table]
        assert res.best_score == (max(means) if scoring == "r2" else min(means))
        assert [row["params"] for row in res.cv_table] == grid_points({"lambda": [0.1, 1.0, 10.0, 100.0]})


def test_grid_ties_pick_first_point(rng):
    d = random_regression(rng, 30, 2)
    res = grid_search(d, GridSpec("mlr", {"standardize": [False, False]}))
    assert res.cv_table[0]["mean"] == res.cv_table[1]["mean"]
    assert res.best_params == {"standardize": False}


def test_grid_deterministic(rng):
    d = random_regression(rng, 60, 3)
    spec = GridSpec("tree", {"max_depth": [2, 4], "min_samples_leaf": [1, 5]}, seed=7)
    assert json.dumps(grid_search(d, spec).to_dict()) == json.dumps(grid_search(d, spec).to_dict())


def test_grid_validation():
    d = make_dm(np.arange(20.0), np.arange(20.0))
    with pytest.raises(EvaluationError, match="lambda"):
        grid_search(d, GridSpec("ridge", {"lambda": [-1.0]}))
    with pytest.raises(EvaluationError):
        GridSpec("ridge", {})
    with pytest.raises(EvaluationError):
        GridSpec("svm", {"c": [1]})
    with pytest.raises(EvaluationError):
        GridSpec("ridge", {"lambda": [1]}, scoring="rmse")
    GridSpec("mlr")


# ------------------------------------------------------------------- compare


def test_compare_single_and_duplicate(rng):
    d = random_regression(rng, 50, 3)
    one = compare_models(d, SplitSpec(seed=1), [ModelConfig("MLR", "mlr")])
    assert len(one.rows) == 1 and one.winners == {"mse": "MLR", "mae": "MLR", "r_squared": "MLR"}
    two = compare_models(d, SplitSpec(seed=1), [ModelConfig("A", "tree", {"max_depth": 3}),
                                                 ModelConfig("B", "tree", {"max_depth": 3})])
    a, b = two.rows
    assert (a["mse"], a["mae"], a["r_squared"]) == (b["mse"], b["mae"], b["r_squared"])
    assert two.winners["mse"] == "A"


def test_compare_annotates_failures(rng):
    d = random_regression(rng, 50, 3)
    t = compare_models(d, SplitSpec(seed=1), [ModelConfig("bad", "ridge", {"lambda": -1}),
                                               ModelConfig("ok", "mlr")])
    assert t.rows[0]["error"] and t.rows[0]["mse"] is None
    assert t.winners["mse"] == "ok"
    md = t.to_markdown()
    assert "| bad | n/a | n/a | n/a |" in md and "Warnings:" in md
    with pytest.raises(EvaluationError):
        compare_models(d, SplitSpec(), [])


def test_markdown_layout():
    rows = [{"label": "MLR", "mse": 48_300_000.0, "mae": 3390.0, "r_squared": 0.7412, "error": None},
            {"label": "RF", "mse": 37_100_000.0, "mae": 3060.0, "r_squared": 0.7399, "error": None}]
    md = comparison_markdown(rows, {"mse": "RF", "mae": "RF", "r_squared": "MLR"})
    assert md.splitlines() == [
        "| | MSE | MAE | R Squared |",
        "|---|---|---|---|",
        "| MLR | 4.83e+7 | 3.39e+3 | **0.74** |",
        "| RF | **3.71e+7** | **3.06e+3** | 0.74 |",
    ]
    assert format_sci(None) == "n/a"
    assert format_sci(0.000123) == "1.23e-4"


def test_table_json_is_stable(rng):
    d = random_regression(rng, 40, 2)
    t = compare_models(d, SplitSpec(seed=5), [ModelConfig("MLR", "mlr")])
    assert isinstance(t, ComparisonTable)
    assert t.to_json() == compare_models(d, SplitSpec(seed=5), [ModelConfig("MLR", "mlr")]).to_json()


def test_fit_family_errors(rng):
    d = random_regression(rng, 20, 2)
    with pytest.raises(EvaluationError, match="unknown"):
        fit_family("svm", {}, d)
    with pytest.raises(EvaluationError, match="integer"):
        fit_family("tree", {"max_depth": 2.5}, d)
