"""K-means, silhouette scoring and majority-class splitting."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import Dataset

log = logging.getLogger(__name__)


def _sq_distances(points, centers):
    d = (
        np.sum(points**2, axis=1)[:, None]
        - 2.0 * points @ centers.T
        + np.sum(centers**2, axis=1)[None, :]
    )
    return np.maximum(d, 0.0)


def _kmeans_pp(points, k, rng):
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    closest = _sq_distances(points, points[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=closest / total))
        else:
            # every point already sits on a center: take the first unused index
            unused = np.setdiff1d(np.arange(n), chosen)
            nxt = int(unused[0])
        chosen.append(nxt)
        closest = np.minimum(closest, _sq_distances(points, points[[nxt]])[:, 0])
    return points[chosen].copy()


@dataclass(frozen=True)
class KMeansResult:
    k: int
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    inertia_history: tuple = ()
    n_iter: int = 0


def kmeans(points, k, seed=0, max_iters=300):
    """Lloyd iterations from a k-means++ start until assignments stop changing."""
    points = check_array(points, dtype=np.float64)
    n = points.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k={k} must lie in [1, n={n}]")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(points, k, rng)
    assign = None
    history = []
    it = 0
    for it in range(1, max_iters + 1):
        dist = _sq_distances(points, centers)
        new_assign = np.argmin(dist, axis=1)  # ties go to the lowest cluster id
        history.append(float(dist[np.arange(n), new_assign].sum()))
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(k):
            members = assign == c
            if members.any():
                centers[c] = points[members].mean(axis=0)
        # empty clusters take the point farthest from its own centroid
        for c in np.flatnonzero(np.bincount(assign, minlength=k) == 0):
            own = _sq_distances(points, centers)[np.arange(n), assign]
            far = int(np.argmax(own))
            centers[c] = points[far]
            assign[far] = c
    dist = _sq_distances(points, centers)
    inertia = float(dist[np.arange(n), assign].sum())
    return KMeansResult(k, centers, assign, inertia, tuple(history), it)


class KMeans(ClusterMixin, BaseEstimator):
    def __init__(self, n_clusters=2, seed=0, max_iters=300):
        self.n_clusters = n_clusters
        self.seed = seed
        self.max_iters = max_iters

    def fit(self, X, y=None):
        res = kmeans(X, self.n_clusters, self.seed, self.max_iters)
        self.cluster_centers_ = res.centroids
        self.labels_ = res.assignments
        self.inertia_ = res.inertia
        self.inertia_history_ = res.inertia_history
        self.n_iter_ = res.n_iter
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X, dtype=np.float64)
        return np.argmin(_sq_distances(X, self.cluster_centers_), axis=1)


def silhouette(points, assignments, sample_cap=None, seed=0):
    """Mean silhouette coefficient; members of singleton clusters score 0.

    With ``sample_cap`` set, at most that many points (uniformly drawn) are
    scored, and distances are measured against that subsample only.
    """
    points = check_array(points, dtype=np.float64)
    labels = np.asarray(assignments)
    if labels.shape != (points.shape[0],):
        raise ValueError("one assignment per point is required")
    if sample_cap is not None and points.shape[0] > sample_cap:
        keep = np.sort(np.random.default_rng(seed).choice(points.shape[0], sample_cap, replace=False))
        points, labels = points[keep], labels[keep]
    ids, labels = np.unique(labels, return_inverse=True)
    if ids.size < 2:
        raise ValueError("silhouette needs at least two clusters")
    k = ids.size
    sizes = np.bincount(labels, minlength=k)
    dist = np.sqrt(_sq_distances(points, points))
    np.fill_diagonal(dist, 0.0)
    # sum of distances from every point to each cluster
    sums = np.zeros((points.shape[0], k))
    for c in range(k):
        sums[:, c] = dist[:, labels == c].sum(axis=1)
    n = points.shape[0]
    own = sizes[labels]
    a = np.where(own > 1, sums[np.arange(n), labels] / np.maximum(own - 1, 1), 0.0)
    mean_other = sums / sizes[None, :]
    mean_other[np.arange(n), labels] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


@dataclass(frozen=True)
class RelabelResult:
    dataset: Dataset
    chosen_k: int
    scores: dict
    mapping: list  # (original label, first new id, last new id)
    sample_cap: int | None = None


def relabel_majority(data, majority_class, k_candidates=(2, 3, 4, 5, 6, 7), seed=0, sample_cap=2000):
    """Split one class into ``k*`` pseudo-classes picked by the best silhouette.

    The pseudo-classes get ids ``0..k*-1``; remaining classes follow in their
    original order.
    """
    if not 0 <= majority_class < data.n_classes:
        raise ValueError(f"class {majority_class} does not exist")
    members = np.flatnonzero(data.labels == majority_class)
    pts = data.features[members]
    feasible = sorted(k for k in k_candidates if 2 <= k <= members.size)
    if not feasible:
        raise ValueError(f"no candidate k in {sorted(k_candidates)} fits {members.size} samples")
    scores = {}
    fits = {}
    if np.all(pts == pts[0]):
        chosen = feasible[0]
        log.warning("majority class points are identical; splitting into k=%d arbitrarily", chosen)
        assign = np.arange(members.size) % chosen
    else:
        for k in feasible:
            res = kmeans(pts, k, seed)
            fits[k] = res.assignments
            if np.unique(res.assignments).size < 2:
                scores[k] = -1.0
            else:
                scores[k] = silhouette(pts, res.assignments, sample_cap, seed)
        chosen = max(feasible, key=lambda k: (scores[k], -k))
        assign = fits[chosen]

    new_labels = np.empty_like(data.labels)
    new_labels[members] = assign
    old_names = data.class_names or tuple(str(c) for c in range(data.n_classes))
    names = [f"{old_names[majority_class]}{j}" for j in range(chosen)]
    mapping = [(old_names[majority_class], 0, chosen - 1)]
    next_id = chosen
    for c in range(data.n_classes):
        if c == majority_class:
            continue
        new_labels[data.labels == c] = next_id
        names.append(old_names[c])
        mapping.append((old_names[c], next_id, next_id))
        next_id += 1
    relabeled = Dataset(data.features, new_labels, tuple(names))
    return RelabelResult(relabeled, chosen, scores, mapping, sample_cap)


def write_mapping(result, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["original_label", "new_label_range"])
        for name, lo, hi in result.mapping:
            w.writerow([name, f"{lo}" if lo == hi else f"{lo}-{hi}"])
