"""CART regression trees and bagged random forests.

Split search is exact: every midpoint between consecutive distinct values of
each candidate feature is scored by squared-error reduction, ties going to
the lower feature index and then the lower threshold. Rows are sorted by
(value, target) before scanning and node means sum the sorted targets, so a
fitted tree does not depend on the order of its training rows.

Randomness comes from counter-based SplitMix64 streams (see ``kernels``):
tree ``b`` draws its bootstrap from stream ``(seed, b)`` and the feature
subset of its ``k``-th node (pre-order) from ``(seed, b, k)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import kernels
from ._accel import get_backend
from .ingest import DesignMatrix

TREE_FORMAT = "lanehouse.tree"
FOREST_FORMAT = "lanehouse.forest"
FORMAT_VERSION = 1


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 5
    min_samples_leaf: int = 7
    min_samples_split: int = 2

    def __post_init__(self):
        if self.max_depth < 1:
            raise TreeError("max_depth must be positive")
        if self.min_samples_leaf < 1:
            raise TreeError("min_samples_leaf must be at least 1")
        if self.min_samples_split < 2:
            raise TreeError("min_samples_split must be at least 2")


@dataclass(frozen=True)
class ForestParams:
    tree: TreeParams = TreeParams(max_depth=10, min_samples_leaf=5, min_samples_split=10)
    n_estimators: int = 100
    feature_fraction: float = 1 / 3
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 1:
            raise TreeError("n_estimators must be at least 1")
        if not 0 < self.feature_fraction <= 1:
            raise TreeError("feature_fraction must lie in (0, 1]")

    def n_candidates(self, p: int) -> int:
        return min(p, max(1, math.ceil(self.feature_fraction * p)))


@dataclass(frozen=True)
class Leaf:
    value: float
    count: int


@dataclass(frozen=True)
class Split:
    feature_index: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"
    count: int
    gain: float


TreeNode = Union[Leaf, Split]


@dataclass(frozen=True)
class SplitChoice:
    feature_index: int
    threshold: float
    sse_reduction: float


def best_split(x: np.ndarray, y: np.ndarray, feature_candidates: Sequence[int] | None = None,
               min_samples_leaf: int = 1) -> SplitChoice | None:
    """Best admissible split of the sample ``(x, y)``, or ``None``.

    A split is admissible when both children keep ``min_samples_leaf`` rows;
    it must reduce the total squared error by a positive amount.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    if n < 2:
        return None
    if feature_candidates is None:
        candidates = np.arange(x.shape[1], dtype=np.int64)
    else:
        candidates = np.array(sorted(feature_candidates), dtype=np.int64)
    yc = y - kernels._sorted_sum(y) / n
    gain, f, _, lo, hi = kernels.node_split(x, yc, candidates, min_samples_leaf)
    if f < 0:
        return None
    return SplitChoice(f, kernels.midpoint(lo, hi), gain)


@dataclass(frozen=True)
class FeatureStream:
    """Per-node feature subsampling: ``m`` features drawn from stream ``(seed, tree, node)``."""

    m: int
    seed: int
    tree: int

    def state(self) -> int:
        return kernels.derive(self.seed, self.tree)


def fit_tree(train: DesignMatrix, params: TreeParams = TreeParams(),
             feature_candidates: Sequence[int] | None = None,
             row_indices: Sequence[int] | None = None,
             stream: FeatureStream | None = None) -> TreeNode:
    """Grow a regression tree greedily.

    ``row_indices`` may repeat rows (bootstrap multiset). ``stream``, when
    given, draws each node's candidate features and overrides
    ``feature_candidates``. Nodes are numbered in pre-order.
    """
    if train.n == 0:
        raise TreeError("cannot fit a tree on an empty training set")
    rows = np.arange(train.n) if row_indices is None else np.asarray(row_indices, dtype=np.int64)
    if rows.size == 0:
        raise TreeError("cannot fit a tree on an empty sample")
    if feature_candidates is None:
        fixed = np.arange(train.p, dtype=np.int64)
    else:
        fixed = np.array(sorted(set(int(f) for f in feature_candidates)), dtype=np.int64)
        if fixed.size and (fixed[0] < 0 or fixed[-1] >= train.p):
            raise TreeError("feature candidate out of range")
    m = stream.m if stream is not None else 0
    state = stream.state() if stream is not None else 0
    if get_backend() == "numba":
        arrays = kernels.grow_tree_jit(train.x, train.y, rows, params.max_depth,
                                       params.min_samples_leaf, params.min_samples_split,
                                       fixed, m, np.uint64(state))
        return _from_arrays(*arrays)
    return _grow_np(train.x, train.y, rows, params, fixed, m, state)


def _grow_np(x_all, y_all, rows, params: TreeParams, fixed, m, state) -> TreeNode:
    p = x_all.shape[1]
    counter = [0]

    def grow(idx: np.ndarray, depth: int) -> TreeNode:
        node_id = counter[0]
        counter[0] += 1
        y = y_all[idx]
        n = len(idx)
        mean = kernels._sorted_sum(y) / n
        if depth >= params.max_depth or n < params.min_samples_split or n < 2:
            return Leaf(mean, n)
        cands = kernels.sample_features_np(p, m, kernels.derive_from(state, node_id)) if m > 0 else fixed
        xn = x_all[idx]
        gain, f, _, lo, hi = kernels.node_split(xn, y - mean, cands, params.min_samples_leaf)
        if f < 0:
            return Leaf(mean, n)
        thr = kernels.midpoint(lo, hi)
        go_left = xn[:, f] <= thr
        left = grow(idx[go_left], depth + 1)
        right = grow(idx[~go_left], depth + 1)
        return Split(f, thr, left, right, n, gain)

    return grow(rows, 0)


def _from_arrays(feature, threshold, left, right, value, count, gain) -> TreeNode:
    def build(i: int) -> TreeNode:
        if feature[i] < 0:
            return Leaf(float(value[i]), int(count[i]))
        return Split(int(feature[i]), float(threshold[i]), build(left[i]), build(right[i]),
                     int(count[i]), float(gain[i]))

    return build(0)


def predict_tree(t: TreeNode, x) -> float:
    """Follow one feature row down the tree (left when ``x[f] <= threshold``)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise TreeError("predict_tree takes a single feature row")
    node = t
    while isinstance(node, Split):
        if node.feature_index >= x.shape[0]:
            raise TreeError(f"row has {x.shape[0]} features, tree uses index {node.feature_index}")
        node = node.left if x[node.feature_index] <= node.threshold else node.right
    return node.value


def iter_nodes(t: TreeNode):
    stack = [(t, 0)]
    while stack:
        node, depth = stack.pop()
        yield node, depth
        if isinstance(node, Split):
            stack.append((node.right, depth + 1))
            stack.append((node.left, depth + 1))


def tree_depth(t: TreeNode) -> int:
    return max(d for _, d in iter_nodes(t))


def flatten(t: TreeNode):
    """Array form ``(feature, threshold, left, right, value)`` in pre-order."""
    feature, threshold, left, right, value = [], [], [], [], []

    def visit(node) -> int:
        i = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        if isinstance(node, Leaf):
            value[i] = node.value
        else:
            feature[i] = node.feature_index
            threshold[i] = node.threshold
            left[i] = visit(node.left)
            right[i] = visit(node.right)
        return i

    visit(t)
    return (np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
            np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
            np.array(value, dtype=np.float64))


def max_feature_index(t: TreeNode) -> int:
    return max((n.feature_index for n, _ in iter_nodes(t) if isinstance(n, Split)), default=-1)


def node_to_dict(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {"leaf": True, "value": node.value, "count": node.count}
    return {"leaf": False, "feature_index": node.feature_index, "threshold": node.threshold,
            "count": node.count, "gain": node.gain,
            "left": node_to_dict(node.left), "right": node_to_dict(node.right)}


def node_from_dict(doc) -> TreeNode:
    if doc["leaf"]:
        return Leaf(float(doc["value"]), int(doc["count"]))
    return Split(int(doc["feature_index"]), float(doc["threshold"]), node_from_dict(doc["left"]),
                 node_from_dict(doc["right"]), int(doc["count"]), float(doc["gain"]))


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """A fitted tree plus what is needed to predict matrices quickly."""

    root: TreeNode
    params: TreeParams
    n_features: int
    _flat: tuple = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_flat", flatten(self.root))

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.n_features:
            raise TreeError(f"expected {self.n_features} columns, got {x.shape[1]}")
        return kernels.tree_predict(*self._flat, x)

    def gain_totals(self) -> np.ndarray:
        totals = np.zeros(self.n_features)
        for node, _ in iter_nodes(self.root):
            if isinstance(node, Split):
                totals[node.feature_index] += node.gain
        return totals

    def to_dict(self) -> dict:
        return {"format": TREE_FORMAT, "version": FORMAT_VERSION, "n_features": self.n_features,
                "params": _tree_params_dict(self.params), "root": node_to_dict(self.root)}

    @classmethod
    def from_dict(cls, doc) -> DecisionTree:
        if doc.get("format") != TREE_FORMAT or doc.get("version") != FORMAT_VERSION:
            raise TreeError("not a version-1 tree document")
        return cls(node_from_dict(doc["root"]), TreeParams(**doc["params"]), int(doc["n_features"]))


def _tree_params_dict(p: TreeParams) -> dict:
    return {"max_depth": p.max_depth, "min_samples_leaf": p.min_samples_leaf,
            "min_samples_split": p.min_samples_split}


def fit_decision_tree(train: DesignMatrix, params: TreeParams = TreeParams()) -> DecisionTree:
    return DecisionTree(fit_tree(train, params), params, train.p)


def bootstrap_rows(n: int, seed: int, b: int) -> np.ndarray:
    return kernels.bootstrap_np(n, kernels.derive(seed, b))


def node_features(p: int, m: int, seed: int, b: int, node: int) -> np.ndarray:
    if m >= p:
        return np.arange(p)
    return kernels.sample_features_np(p, m, kernels.derive(seed, b, node))


@dataclass(frozen=True, eq=False)
class Forest:
    trees: tuple[DecisionTree, ...]
    params: ForestParams
    oob_indices: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.trees) != self.params.n_estimators:
            raise TreeError("tree count differs from n_estimators")

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    def tree_predictions(self, x) -> np.ndarray:
        return np.stack([t.predict(x) for t in self.trees])

    def predict(self, x) -> np.ndarray:
        acc = None
        for t in self.trees:
            pred = t.predict(x)
            acc = pred if acc is None else acc + pred
        return acc / len(self.trees)

    def gain_totals(self) -> np.ndarray:
        return sum(t.gain_totals() for t in self.trees) / len(self.trees)

    def to_dict(self) -> dict:
        p = self.params
        return {
            "format": FOREST_FORMAT,
            "version": FORMAT_VERSION,
            "params": {"tree": _tree_params_dict(p.tree), "n_estimators": p.n_estimators,
                       "feature_fraction": p.feature_fraction, "seed": p.seed},
            "trees": [t.to_dict() for t in self.trees],
            "oob_indices": [idx.tolist() for idx in self.oob_indices],
        }

    @classmethod
    def from_dict(cls, doc) -> Forest:
        if doc.get("format") != FOREST_FORMAT or doc.get("version") != FORMAT_VERSION:
            raise TreeError("not a version-1 forest document")
        raw = doc["params"]
        params = ForestParams(TreeParams(**raw["tree"]), int(raw["n_estimators"]),
                              float(raw["feature_fraction"]), int(raw["seed"]))
        trees = tuple(DecisionTree.from_dict(t) for t in doc["trees"])
        oob = tuple(np.asarray(i, dtype=np.int64) for i in doc["oob_indices"])
        return cls(trees, params, oob)


def predict_forest(f: Forest, x) -> float:
    """Mean of the per-tree predictions for one row, summed in tree order."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise TreeError("predict_forest takes a single feature row")
    if x.shape[0] < f.n_features:
        raise TreeError(f"row has {x.shape[0]} features, forest expects {f.n_features}")
    total = 0.0
    for t in f.trees:
        total += predict_tree(t.root, x)
    return total / len(f.trees)


def fit_forest(train: DesignMatrix, params: ForestParams = ForestParams(), bootstrap: bool = True,
               n_jobs: int = 1) -> Forest:
    """Bagged trees with per-node feature subsampling.

    ``bootstrap=False`` is a test hook: every tree then sees each row once.
    Results do not depend on ``n_jobs``.
    """
    if train.n == 0:
        raise TreeError("cannot fit a forest on an empty training set")
    n, p = train.n, train.p
    m = params.n_candidates(p)

    def one(b: int):
        rows = bootstrap_rows(n, params.seed, b) if bootstrap else np.arange(n)
        stream = None if m >= p else FeatureStream(m, params.seed, b)
        root = fit_tree(train, params.tree, row_indices=rows, stream=stream)
        in_bag = np.zeros(n, dtype=bool)
        in_bag[rows] = True
        return DecisionTree(root, params.tree, p), np.flatnonzero(~in_bag)

    indices = range(1, params.n_estimators + 1)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(one, indices))
    else:
        results = [one(b) for b in indices]
    return Forest(tuple(t for t, _ in results), params, tuple(o for _, o in results))
