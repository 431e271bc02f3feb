"""Per-class latent targets: PCA projection, class statistics and mean dispersal.

The class priors give every class ``c`` a target mean ``mu_hat[c]`` and a
spread ``sigma[c]`` in latent space. They are built by projecting the training
features onto their top principal components, measuring each class there and
then pushing every class mean outward from the center of the class means to a
radius of ``(c + 1) * scale``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .nn import sym_eigen

log = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-6


class DegenerateDirectionError(ValueError):
    """A class mean coincides with the center of class means."""


class PCA(TransformerMixin, BaseEstimator):
    """Principal component projection backed by the Jacobi eigensolver.

    Features are centered by the training mean; ``components_`` holds the top
    ``n_components`` eigenvectors of the sample covariance as rows.
    """

    def __init__(self, n_components=2):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        n, d = X.shape
        if not 1 <= self.n_components <= d:
            raise ValueError(f"n_components={self.n_components} must lie in [1, {d}]")
        self.mean_ = X.mean(axis=0)
        centered = X - self.mean_
        cov = centered.T @ centered / (n - 1)
        values, vectors = sym_eigen(cov)
        k = self.n_components
        self.components_ = vectors[:, :k].T.copy()
        self.explained_variance_ = values[:k].copy()
        self.n_features_in_ = d
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return (X - self.mean_) @ self.components_.T

    def inverse_transform(self, Z):
        check_is_fitted(self, "components_")
        return np.asarray(Z, dtype=np.float64) @ self.components_ + self.mean_


def fit_pca(train, d_z):
    """PCA with ``d_z`` components fitted on a Dataset's features."""
    if d_z > train.d_input:
        raise ValueError(f"d_z={d_z} exceeds the input dimensionality {train.d_input}")
    return PCA(n_components=d_z).fit(train.features)


@dataclass(frozen=True)
class ClassStats:
    means: np.ndarray
    stds: np.ndarray
    center: np.ndarray


def class_stats(points, labels, n_classes=None):
    """Per-class mean and population std, plus the unweighted mean of class means."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    means = np.empty((n_classes, points.shape[1]))
    stds = np.empty_like(means)
    for c in range(n_classes):
        members = points[labels == c]
        if members.shape[0] == 0:
            raise ValueError(f"class {c} has no samples")
        means[c] = members.mean(axis=0)
        stds[c] = np.sqrt(np.mean((members - means[c]) ** 2, axis=0))
    return ClassStats(means, stds, means.mean(axis=0))


@dataclass(frozen=True)
class ClassPriors:
    mu_raw: np.ndarray
    sigma: np.ndarray
    mu_hat: np.ndarray
    center: np.ndarray
    scale: float
    variant: str = "transform"

    @property
    def n_classes(self):
        return self.mu_hat.shape[0]

    @property
    def d_z(self):
        return self.mu_hat.shape[1]

    def targets(self, labels):
        """Target mean ``mu_hat[c]`` for every label in ``labels``."""
        labels = np.asarray(labels)
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ValueError(f"label outside the {self.n_classes} classes covered by the priors")
        return self.mu_hat[labels]

    def to_dict(self):
        return {
            "mu_raw": self.mu_raw.tolist(),
            "sigma": self.sigma.tolist(),
            "mu_hat": self.mu_hat.tolist(),
            "center": self.center.tolist(),
            "scale": float(self.scale),
            "variant": self.variant,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["mu_raw"], dtype=np.float64),
            np.asarray(d["sigma"], dtype=np.float64),
            np.asarray(d["mu_hat"], dtype=np.float64),
            np.asarray(d["center"], dtype=np.float64),
            float(d["scale"]),
            d.get("variant", "transform"),
        )


def transform_means(stats, scale, strict=False):
    """Move each class mean along its ray from the center to radius ``(c + 1) * scale``.

    A class whose mean equals the center has no ray. With ``strict`` this
    raises :class:`DegenerateDirectionError`; otherwise the unit vector
    ``e_(c mod d_z)`` is used and a warning is logged.
    """
    means = np.asarray(stats.means, dtype=np.float64)
    center = np.asarray(stats.center, dtype=np.float64)
    n_classes, d_z = means.shape
    mu_hat = np.empty_like(means)
    for c in range(n_classes):
        direction = means[c] - center
        norm = np.linalg.norm(direction)
        if norm == 0.0:
            if strict:
                raise DegenerateDirectionError(f"mean of class {c} coincides with the center")
            log.warning("class %d mean equals the center; using basis vector e_%d", c, c % d_z)
            unit = np.zeros(d_z)
            unit[c % d_z] = 1.0
        else:
            unit = direction / norm
        mu_hat[c] = center + (c + 1) * scale * unit
    return ClassPriors(
        mu_raw=means.copy(),
        sigma=np.maximum(stats.stds, SIGMA_FLOOR),
        mu_hat=mu_hat,
        center=center.copy(),
        scale=float(scale),
        variant="transform",
    )


def fixed_means(n_classes, scale, d_z, stats=None):
    """Constant targets ``(scale * c, ..., scale * c)`` for the fixed-mean ablation.

    ``sigma`` comes from ``stats`` when given, otherwise it is 1.
    """
    if n_classes < 2:
        raise ValueError("need at least two classes")
    mu_hat = scale * np.repeat(np.arange(n_classes, dtype=np.float64)[:, None], d_z, axis=1)
    if stats is None:
        mu_raw = mu_hat.copy()
        sigma = np.ones((n_classes, d_z))
    else:
        mu_raw = np.asarray(stats.means, dtype=np.float64).copy()
        sigma = np.maximum(stats.stds, SIGMA_FLOOR)
    return ClassPriors(mu_raw, sigma, mu_hat, mu_hat.mean(axis=0), float(scale), "fix")


def fit_priors(X, y, d_z, scale=20.0, variant="transform", n_classes=None):
    """Class priors from training features and labels.

    ``variant`` is ``"transform"`` (rays from the center of class means) or
    ``"fix"`` (constant ``scale * c`` targets).
    """
    X = check_array(X, dtype=np.float64, ensure_min_samples=2)
    y = np.asarray(y, dtype=np.int64)
    projected = PCA(n_components=d_z).fit_transform(X)
    stats = class_stats(projected, y, n_classes)
    if variant == "transform":
        return transform_means(stats, scale)
    if variant == "fix":
        return fixed_means(stats.means.shape[0], scale, d_z, stats)
    raise ValueError(f"unknown prior variant {variant!r}")
