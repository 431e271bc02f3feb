"""CART decision trees (Gini) and a bootstrap random forest."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


def gini(counts):
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return 1.0 - float(np.sum(p * p))


def _best_split(X, y, n_classes, features):
    """Lowest weighted-Gini split over ``features`` (scanned in the given order).

    Returns ``(feature, threshold, impurity)`` or ``None`` when every feature
    is constant on this node.
    """
    n = y.size
    best = None
    onehot_y = np.zeros((n, n_classes))
    onehot_y[np.arange(n), y] = 1.0
    n_left = np.arange(1, n, dtype=np.float64)
    n_right = n - n_left
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        left = np.cumsum(onehot_y[order], axis=0)
        right = left[-1] - left[:-1]
        left = left[:-1]
        g_left = 1.0 - np.sum(left**2, axis=1) / n_left**2
        g_right = 1.0 - np.sum(right**2, axis=1) / n_right**2
        impurity = (n_left * g_left + n_right * g_right) / n
        impurity[~valid] = np.inf
        i = int(np.argmin(impurity))
        if best is None or impurity[i] < best[2] - 1e-12:
            best = (int(f), 0.5 * (xs[i] + xs[i + 1]), float(impurity[i]))
    return best


def _n_split_features(rule, d):
    if rule is None:
        return d
    if rule == "sqrt":
        return max(1, math.ceil(math.sqrt(d)))
    if isinstance(rule, int) and rule >= 1:
        return min(rule, d)
    raise ValueError(f"unsupported max_features {rule!r}")


class DecisionTreeClassifier(ClassifierMixin, BaseEstimator):
    """Greedy Gini tree; ``x[f] <= threshold`` goes left.

    Threshold candidates are midpoints between consecutive distinct values.
    When ``max_features`` is set, a random subset of that size is scanned
    first, and further features are only tried if none of them can split.
    """

    def __init__(self, max_depth=None, min_samples_split=2, max_features=None, seed=0):
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self.seed = seed

    def fit(self, X, y, n_classes=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        y = y.astype(np.int64)
        if y.min() < 0:
            raise ValueError("labels must be non-negative class ids")
        self.n_classes_ = int(n_classes if n_classes is not None else y.max() + 1)
        self.classes_ = np.arange(self.n_classes_)
        self.n_features_in_ = X.shape[1]
        rng = np.random.default_rng(self.seed)
        self._grow(X, y, rng)
        return self

    def _grow(self, X, y, rng):
        d = X.shape[1]
        k = _n_split_features(self.max_features, d)
        feature, threshold, left, right, value = [], [], [], [], []

        def new_node(idx):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            counts = np.bincount(y[idx], minlength=self.n_classes_).astype(np.float64)
            value.append(counts / counts.sum())
            return len(feature) - 1

        stack = [(new_node(np.arange(y.size)), np.arange(y.size), 0)]
        while stack:
            node, idx, depth = stack.pop()
            labels = y[idx]
            if (
                idx.size < self.min_samples_split
                or (self.max_depth is not None and depth >= self.max_depth)
                or np.all(labels == labels[0])
            ):
                continue
            order = rng.permutation(d) if k < d else np.arange(d)
            split = _best_split(X[idx], labels, self.n_classes_, np.sort(order[:k]))
            if split is None and k < d:
                split = _best_split(X[idx], labels, self.n_classes_, np.sort(order[k:]))
            if split is None:
                continue
            f, t, _ = split
            go_left = X[idx, f] <= t
            li = new_node(idx[go_left])
            ri = new_node(idx[~go_left])
            feature[node], threshold[node], left[node], right[node] = f, t, li, ri
            stack.append((ri, idx[~go_left], depth + 1))
            stack.append((li, idx[go_left], depth + 1))

        self.feature_ = np.asarray(feature, dtype=np.int64)
        self.threshold_ = np.asarray(threshold, dtype=np.float64)
        self.left_ = np.asarray(left, dtype=np.int64)
        self.right_ = np.asarray(right, dtype=np.int64)
        self.value_ = np.asarray(value, dtype=np.float64)

    @property
    def n_nodes(self):
        return self.feature_.size

    def depth(self):
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.left_[i] >= 0:
                depths[self.left_[i]] = depths[self.right_[i]] = depths[i] + 1
        return int(depths.max())

    def apply(self, X):
        """Leaf index reached by every row."""
        check_is_fitted(self, "feature_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.left_[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            cur = node[rows]
            go_left = X[rows, self.feature_[cur]] <= self.threshold_[cur]
            node[rows] = np.where(go_left, self.left_[cur], self.right_[cur])
            active = self.left_[node] >= 0
        return node

    def predict_proba(self, X):
        return self.value_[self.apply(X)]

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def to_dict(self):
        return {
            "feature": self.feature_.tolist(),
            "threshold": self.threshold_.tolist(),
            "left": self.left_.tolist(),
            "right": self.right_.tolist(),
            "value": self.value_.tolist(),
        }

    @classmethod
    def from_dict(cls, d, n_features, **params):
        tree = cls(**params)
        tree.feature_ = np.asarray(d["feature"], dtype=np.int64)
        tree.threshold_ = np.asarray(d["threshold"], dtype=np.float64)
        tree.left_ = np.asarray(d["left"], dtype=np.int64)
        tree.right_ = np.asarray(d["right"], dtype=np.int64)
        tree.value_ = np.asarray(d["value"], dtype=np.float64)
        tree.n_classes_ = tree.value_.shape[1]
        tree.classes_ = np.arange(tree.n_classes_)
        tree.n_features_in_ = n_features
        return tree


class RandomForestClassifier(ClassifierMixin, BaseEstimator):
    """Bootstrap forest of Gini trees, ``ceil(sqrt(d))`` features per split.

    Predictions average the trees' leaf distributions; ties resolve to the
    lowest class id.
    """

    def __init__(self, n_estimators=100, max_depth=None, min_samples_split=2, max_features="sqrt", bootstrap=True, seed=0):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = seed

    def fit(self, X, y):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        X, y = check_X_y(X, y, dtype=np.float64)
        y = y.astype(np.int64)
        self.n_classes_ = int(y.max()) + 1
        self.classes_ = np.arange(self.n_classes_)
        self.n_features_in_ = X.shape[1]
        seeds = np.random.SeedSequence(self.seed).spawn(self.n_estimators)
        self.estimators_ = []
        n = X.shape[0]
        for ss in seeds:
            rng = np.random.default_rng(ss)
            idx = rng.integers(0, n, n) if self.bootstrap else np.arange(n)
            tree = DecisionTreeClassifier(
                self.max_depth, self.min_samples_split, self.max_features, int(rng.integers(2**31))
            )
            self.estimators_.append(tree.fit(X[idx], y[idx], n_classes=self.n_classes_))
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "estimators_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        proba = np.zeros((X.shape[0], self.n_classes_))
        for tree in self.estimators_:
            proba += tree.predict_proba(X)
        return proba / len(self.estimators_)

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def save(self, path):
        payload = {
            "params": self.get_params(),
            "n_features": self.n_features_in_,
            "n_classes": self.n_classes_,
            "trees": [t.to_dict() for t in self.estimators_],
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path):
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        forest = cls(**payload["params"])
        forest.n_features_in_ = payload["n_features"]
        forest.n_classes_ = payload["n_classes"]
        forest.classes_ = np.arange(forest.n_classes_)
        tree_params = dict(
            max_depth=forest.max_depth, min_samples_split=forest.min_samples_split, max_features=forest.max_features
        )
        forest.estimators_ = [
            DecisionTreeClassifier.from_dict(t, forest.n_features_in_, **tree_params) for t in payload["trees"]
        ]
        return forest


def fit_tree(X, y, max_depth=None, min_samples_split=2, max_features=None, seed=0):
    return DecisionTreeClassifier(max_depth, min_samples_split, max_features, seed).fit(X, y)


def fit_forest(X, y, **params):
    return RandomForestClassifier(**params).fit(X, y)
