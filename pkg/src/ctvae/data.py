"""Datasets: CSV ingestion, min-max scaling, splitting and synthetic blobs."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted


class ParseError(ValueError):
    """A CSV file could not be turned into a Dataset."""

    def __init__(self, message, row=None):
        self.row = row
        super().__init__(message if row is None else f"row {row}: {message}")


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_names: tuple | None = None

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels).astype(np.int64, copy=False)
        if features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {features.shape}")
        if labels.shape != (features.shape[0],):
            raise ValueError("labels length must equal the number of rows")
        if labels.size and labels.min() < 0:
            raise ValueError("labels must be non-negative class ids")
        if self.class_names is not None and labels.size and labels.max() >= len(self.class_names):
            raise ValueError("label id outside the class_names table")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d_input(self):
        return self.features.shape[1]

    @property
    def n_classes(self):
        if self.class_names is not None:
            return len(self.class_names)
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def class_counts(self):
        return np.bincount(self.labels, minlength=self.n_classes)

    def subset(self, index):
        return Dataset(self.features[index], self.labels[index], self.class_names)

    def with_features(self, features):
        return Dataset(features, self.labels, self.class_names)


def _label_order(raw):
    try:
        return sorted(set(raw), key=lambda s: (int(s), s))
    except ValueError:
        return sorted(set(raw))


def load_csv(path, label_column="label", has_header=True):
    """Read a comma-separated feature file.

    ``label_column`` is a header name, or a zero-based column index when the
    file has no header (an int also works with a header). Labels are mapped to
    contiguous ids: numerically sorted when every label is an integer,
    lexicographically otherwise.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ParseError(f"{path} is empty")
    header = None
    if has_header:
        header = [h.strip() for h in rows[0]]
        rows = rows[1:]
        if not rows:
            raise ParseError(f"{path} has a header but no data rows")
    width = len(header) if header is not None else len(rows[0])
    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if header is None:
            raise ParseError(f"label column {label_column!r} given by name but file has no header")
        if label_column not in header:
            raise ParseError(f"unknown label column {label_column!r}; columns are {header}")
        label_idx = header.index(label_column)
    else:
        label_idx = int(label_column)
        if label_idx < 0:
            label_idx += width
        if not 0 <= label_idx < width:
            raise ParseError(f"label column index {label_column} out of range for {width} columns")

    raw_labels = []
    values = np.empty((len(rows), width - 1), dtype=np.float64)
    first_data_row = 2 if has_header else 1
    for i, row in enumerate(rows):
        line = i + first_data_row
        if len(row) != width:
            raise ParseError(f"expected {width} fields, found {len(row)}", row=line)
        raw_labels.append(row[label_idx].strip())
        cells = row[:label_idx] + row[label_idx + 1 :]
        try:
            values[i] = [float(c) for c in cells]
        except ValueError as exc:
            raise ParseError(f"non-numeric feature ({exc})", row=line) from None
        if not np.all(np.isfinite(values[i])):
            raise ParseError("non-finite feature value", row=line)
    names = _label_order(raw_labels)
    lookup = {name: k for k, name in enumerate(names)}
    labels = np.array([lookup[s] for s in raw_labels], dtype=np.int64)
    return Dataset(values, labels, tuple(names))


def save_csv(dataset, path, feature_prefix="f", label_names=True):
    """Write ``dataset`` as ``f0,...,f{d-1},label`` so :func:`load_csv` can read it back."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"{feature_prefix}{j}" for j in range(dataset.d_input)] + ["label"])
        names = dataset.class_names if label_names else None
        for row, y in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in row] + [names[y] if names else int(y)])


class MinMaxNormalizer(TransformerMixin, BaseEstimator):
    """Per-feature min-max scaling to [0, 1]; constant features map to 0.

    Values outside the fitted range are not clipped.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.data_min_ = X.min(axis=0)
        self.data_max_ = X.max(axis=0)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "data_min_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        span = self.data_max_ - self.data_min_
        constant = span == 0
        out = (X - self.data_min_) / np.where(constant, 1.0, span)
        out[:, constant] = 0.0
        return out


@dataclass(frozen=True)
class NormStats:
    data_min: np.ndarray
    data_max: np.ndarray

    def to_normalizer(self):
        norm = MinMaxNormalizer()
        norm.data_min_ = np.asarray(self.data_min, dtype=np.float64)
        norm.data_max_ = np.asarray(self.data_max, dtype=np.float64)
        norm.n_features_in_ = norm.data_min_.shape[0]
        return norm


def fit_normalizer(train):
    if train.n == 0:
        raise ValueError("cannot fit a normalizer on an empty dataset")
    norm = MinMaxNormalizer().fit(train.features)
    return NormStats(norm.data_min_, norm.data_max_)


def apply_normalizer(stats, data):
    return data.with_features(stats.to_normalizer().transform(data.features))


def split(data, train_fraction=0.7, seed=0, stratified=True):
    """Shuffle-split into ``(train, test)``; per-class proportions kept when stratified."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    if not stratified:
        perm = rng.permutation(data.n)
        cut = int(round(train_fraction * data.n))
        return data.subset(np.sort(perm[:cut])), data.subset(np.sort(perm[cut:]))
    train_idx, test_idx = [], []
    for c in range(data.n_classes):
        idx = np.flatnonzero(data.labels == c)
        if idx.size == 0:
            continue
        if idx.size < 2:
            raise ValueError(f"class {c} has fewer than 2 samples; cannot stratify")
        idx = rng.permutation(idx)
        cut = min(max(int(round(train_fraction * idx.size)), 1), idx.size - 1)
        train_idx.append(idx[:cut])
        test_idx.append(idx[cut:])
    return (
        data.subset(np.sort(np.concatenate(train_idx))),
        data.subset(np.sort(np.concatenate(test_idx))),
    )


@dataclass(frozen=True)
class BlobSpec:
    n_classes: int = 3
    n_train: int = 3500
    n_test: int = 1500
    d: int = 10
    std: float = 0.2
    center_box: tuple = field(default=(0.0, 1.0))
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if not self.std > 0:
            raise ValueError("std must be positive")
        if not self.center_box[0] < self.center_box[1]:
            raise ValueError("center_box must satisfy low < high")
        if self.d < 1 or self.n_train < 1 or self.n_test < 1:
            raise ValueError("sizes must be positive")


def _allocate(total, n_classes):
    counts = np.full(n_classes, total // n_classes)
    counts[: total % n_classes] += 1
    return counts


def make_blobs(spec):
    """Isotropic Gaussian classes around centers drawn uniformly in ``center_box``."""
    rng = np.random.default_rng(spec.seed)
    low, high = spec.center_box
    centers = rng.uniform(low, high, size=(spec.n_classes, spec.d))
    names = tuple(str(c) for c in range(spec.n_classes))

    def draw(total):
        counts = _allocate(total, spec.n_classes)
        labels = np.repeat(np.arange(spec.n_classes), counts)
        x = centers[labels] + spec.std * rng.standard_normal((total, spec.d))
        perm = rng.permutation(total)
        return Dataset(x[perm], labels[perm], names)

    train = draw(spec.n_train)
    test = draw(spec.n_test)
    return train, test
