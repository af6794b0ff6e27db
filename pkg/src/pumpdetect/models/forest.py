"""Random forest of depth-limited Gini trees, built on numpy only."""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from math import ceil, sqrt
from typing import Any

import numpy as np

from ..core import N_FEATURES, PipelineError

FORMAT_VERSION = 1


class DegenerateLabelsError(PipelineError, ValueError):
    """Training labels are all of one class."""


class DimensionMismatchError(PipelineError, ValueError):
    pass


@dataclass(frozen=True)
class RFParams:
    n_trees: int = 200
    min_samples_leaf: int = 6
    max_depth: int = 4
    features_per_split: int = ceil(sqrt(N_FEATURES))
    seed: int = 0
    bootstrap: bool = True
    class_weight: str | None = None  # None or "balanced"

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ValueError("n_trees, max_depth and min_samples_leaf must be >= 1")
        if self.features_per_split < 1:
            raise ValueError("features_per_split must be >= 1")
        if self.class_weight not in (None, "balanced"):
            raise ValueError(f"unknown class_weight {self.class_weight!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a non-negative 64-bit integer")


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    impurity: float  # weighted child impurity


def gini(pos_weight, total_weight):
    """Binary Gini impurity ``2p(1-p)`` for a node with the given weight totals."""
    p = pos_weight / total_weight
    return 2.0 * p * (1.0 - p)


def best_split(x: np.ndarray, y: np.ndarray, counts: np.ndarray, weights: np.ndarray,
               features, min_samples_leaf: int) -> Split | None:
    """Lowest weighted child Gini over ``features`` (ascending), midpoint thresholds.

    ``counts`` are bootstrap draw multiplicities and gate ``min_samples_leaf``;
    ``weights`` are counts times class weight and drive the impurity. Ties keep
    the lower feature index, then the lower threshold.
    """
    total_c = counts.sum()
    total_w = weights.sum()
    best: Split | None = None
    yw = weights * y
    total_p = yw.sum()
    for f in sorted(features):
        xf = x[:, f]
        order = np.argsort(xf, kind="stable")
        xs = xf[order]
        cum_c = np.cumsum(counts[order])[:-1]
        cum_w = np.cumsum(weights[order])[:-1]
        cum_p = np.cumsum(yw[order])[:-1]
        ok = (xs[:-1] < xs[1:]) & (cum_c >= min_samples_leaf) & (total_c - cum_c >= min_samples_leaf)
        if not ok.any():
            continue
        wl = cum_w[ok]
        wr = total_w - wl
        pl = cum_p[ok]
        pr = total_p - pl
        with np.errstate(invalid="ignore", divide="ignore"):
            imp = (wl * gini(pl, wl) + wr * gini(pr, wr)) / total_w
        imp = np.where(np.isfinite(imp), imp, np.inf)
        j = int(np.argmin(imp))
        if best is None or imp[j] < best.impurity:
            pos = np.flatnonzero(ok)[j]
            lo, hi = xs[pos], xs[pos + 1]
            thr = lo + (hi - lo) / 2.0
            if not lo <= thr < hi:
                thr = lo
            best = Split(f, float(thr), float(imp[j]))
    return best


@dataclass
class Tree:
    """Flat preorder arrays; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    weight: np.ndarray
    impurity: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            rows = np.flatnonzero(inner)
            nd = node[rows]
            go_left = X[rows, f[rows]] <= self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def importances(self, n_features: int) -> np.ndarray:
        imp = np.zeros(n_features)
        root_w = self.weight[0]
        for i in np.flatnonzero(self.feature >= 0):
            l, r = self.left[i], self.right[i]
            dec = (self.weight[i] * self.impurity[i]
                   - self.weight[l] * self.impurity[l] - self.weight[r] * self.impurity[r])
            imp[self.feature[i]] += dec / root_w
        return imp

    def to_dict(self, i: int = 0) -> dict[str, Any]:
        node = {"n_samples": int(self.n_samples[i]), "weight": float(self.weight[i]),
                "impurity": float(self.impurity[i]), "value": float(self.value[i])}
        if self.feature[i] >= 0:
            node["feature"] = int(self.feature[i])
            node["threshold"] = float(self.threshold[i])
            node["left"] = self.to_dict(int(self.left[i]))
            node["right"] = self.to_dict(int(self.right[i]))
        return node

    @classmethod
    def from_dict(cls, root: dict[str, Any]) -> Tree:
        rows: list[list] = []

        def visit(nd) -> int:
            i = len(rows)
            rows.append([-1, 0.0, -1, -1, nd["value"], nd["n_samples"], nd["weight"], nd["impurity"]])
            if "feature" in nd:
                rows[i][0] = nd["feature"]
                rows[i][1] = nd["threshold"]
                rows[i][2] = visit(nd["left"])
                rows[i][3] = visit(nd["right"])
            return i

        visit(root)
        cols = list(zip(*rows))
        return cls(np.array(cols[0], np.int64), np.array(cols[1], np.float64),
                   np.array(cols[2], np.int64), np.array(cols[3], np.int64),
                   np.array(cols[4], np.float64), np.array(cols[5], np.int64),
                   np.array(cols[6], np.float64), np.array(cols[7], np.float64))


def grow_tree(X: np.ndarray, y: np.ndarray, counts: np.ndarray, class_w: np.ndarray,
              params: RFParams, rng: np.random.Generator) -> Tree:
    """Grow one tree on the samples with nonzero ``counts`` (bootstrap multiplicities)."""
    n_features = X.shape[1]
    k = min(params.features_per_split, n_features)
    nodes: list[list] = []
    yf = y.astype(np.float64)

    def build(idx: np.ndarray, depth: int) -> int:
        c = counts[idx]
        w = c * class_w[idx]
        wsum = float(w.sum())
        wpos = float((w * yf[idx]).sum())
        i = len(nodes)
        nodes.append([-1, 0.0, -1, -1, wpos / wsum, int(c.sum()), wsum, gini(wpos, wsum)])
        if depth >= params.max_depth or wpos == 0.0 or wpos == wsum:
            return i
        if c.sum() < 2 * params.min_samples_leaf:
            return i
        feats = rng.choice(n_features, size=k, replace=False)
        split = best_split(X[idx], yf[idx], c, w, feats, params.min_samples_leaf)
        if split is None:
            return i
        go_left = X[idx, split.feature] <= split.threshold
        nodes[i][0] = split.feature
        nodes[i][1] = split.threshold
        nodes[i][2] = build(idx[go_left], depth + 1)
        nodes[i][3] = build(idx[~go_left], depth + 1)
        return i

    build(np.flatnonzero(counts), 0)
    cols = list(zip(*nodes))
    return Tree(np.array(cols[0], np.int64), np.array(cols[1], np.float64),
                np.array(cols[2], np.int64), np.array(cols[3], np.int64),
                np.array(cols[4], np.float64), np.array(cols[5], np.int64),
                np.array(cols[6], np.float64), np.array(cols[7], np.float64))


def _class_weights(y: np.ndarray, mode: str | None) -> np.ndarray:
    if mode is None:
        return np.ones(len(y))
    n = len(y)
    n_pos = int(y.sum())
    return np.where(y, n / (2.0 * n_pos), n / (2.0 * (n - n_pos)))


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, tree_index]))


def _train_one(X, y, class_w, params: RFParams, t: int) -> Tree:
    rng = _tree_rng(params.seed, t)
    n = len(y)
    if params.bootstrap:
        counts = np.bincount(rng.integers(0, n, size=n), minlength=n)
    else:
        counts = np.ones(n, dtype=np.int64)
    return grow_tree(X, y, counts, class_w, params, rng)


_WORKER: dict[str, Any] = {}


def _worker_init(X, y, class_w, params):
    _WORKER.update(X=X, y=y, class_w=class_w, params=params)


def _worker_train(t: int) -> Tree:
    w = _WORKER
    return _train_one(w["X"], w["y"], w["class_w"], w["params"], t)


@dataclass
class ForestModel:
    params: RFParams
    trees: list[Tree]
    n_features: int
    model_id: str = "rf"

    def predict_proba(self, X) -> np.ndarray:
        """Mean leaf positive fraction over trees, one score per row."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise DimensionMismatchError(f"expected {self.n_features} features, got {X.shape[1]}")
        total = np.zeros(len(X))
        for tree in self.trees:
            total += tree.predict(X)
        return total / len(self.trees)

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X) >= 0.5

    def score(self, X) -> np.ndarray:
        return self.predict_proba(X)

    def to_dict(self) -> dict[str, Any]:
        return {"format_version": FORMAT_VERSION, "kind": "random_forest", "model_id": self.model_id,
                "n_features": self.n_features, "params": dataclasses.asdict(self.params),
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ForestModel:
        return cls(RFParams(**d["params"]), [Tree.from_dict(t) for t in d["trees"]],
                   int(d["n_features"]), d.get("model_id", "rf"))


def check_training_data(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(bool)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("empty training set")
    if len(X) != len(y):
        raise DimensionMismatchError("X and y differ in length")
    if y.all() or not y.any():
        raise DegenerateLabelsError("training labels must contain both classes")
    return X, y


def train_random_forest(X, y, params: RFParams = RFParams(), n_jobs: int = 1) -> ForestModel:
    """Fit ``params.n_trees`` Gini trees on bootstrap samples.

    Tree ``t`` draws all of its randomness from ``SeedSequence([seed, t])``, so
    the forest is identical whether trees are built serially or across
    ``n_jobs`` worker processes.
    """
    X, y = check_training_data(X, y)
    class_w = _class_weights(y, params.class_weight)
    if n_jobs > 1:
        with ProcessPoolExecutor(n_jobs, initializer=_worker_init,
                                 initargs=(X, y, class_w, params)) as ex:
            trees = list(ex.map(_worker_train, range(params.n_trees), chunksize=8))
    else:
        trees = [_train_one(X, y, class_w, params, t) for t in range(params.n_trees)]
    return ForestModel(params, trees, X.shape[1])


def forest_predict(model: ForestModel, x) -> tuple[float, bool]:
    """Score and class (score >= 0.5) for a single feature vector."""
    values = x.values() if hasattr(x, "values") and callable(x.values) else x
    s = float(model.predict_proba(np.asarray(values, dtype=np.float64).reshape(1, -1))[0])
    return s, s >= 0.5


def gini_importance(model: ForestModel) -> np.ndarray:
    """Impurity decrease per feature, averaged over trees and normalized to sum to 1."""
    imp = np.mean([t.importances(model.n_features) for t in model.trees], axis=0)
    total = imp.sum()
    return imp / total if total > 0 else imp
