"""Classification scores and between/within-class variance of a representation."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


def _pair(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    if y_true.size == 0:
        raise ValueError("empty label vectors")
    return y_true, y_pred


@dataclass(frozen=True)
class ConfusionCounts:
    """One-vs-rest counts per class."""

    tp: np.ndarray
    fp: np.ndarray
    tn: np.ndarray
    fn: np.ndarray

    @property
    def n_classes(self):
        return self.tp.size


def confusion_counts(y_true, y_pred, n_classes=None):
    y_true, y_pred = _pair(y_true, y_pred)
    if n_classes is None:
        n_classes = int(max(y_true.max(), y_pred.max())) + 1
    table = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(table, (y_true, y_pred), 1)
    tp = np.diag(table).copy()
    fp = table.sum(axis=0) - tp
    fn = table.sum(axis=1) - tp
    tn = y_true.size - tp - fp - fn
    return ConfusionCounts(tp, fp, tn, fn)


def accuracy(y_true, y_pred):
    y_true, y_pred = _pair(y_true, y_pred)
    return float(np.mean(y_true == y_pred))


def _ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def precision_recall_fscore(y_true, y_pred, average="macro", pos_label=1):
    """Precision, recall and F-score; zero denominators score 0.

    ``average`` is ``"macro"`` (unweighted mean over the classes present in
    either vector), ``"micro"`` (pooled counts), ``"binary"`` (scores of
    ``pos_label`` only) or ``None`` (per-class arrays).
    """
    counts = confusion_counts(y_true, y_pred)
    p = _ratio(counts.tp, counts.tp + counts.fp)
    r = _ratio(counts.tp, counts.tp + counts.fn)
    f = _ratio(2 * p * r, p + r)
    if average is None:
        return p, r, f
    if average == "binary":
        if pos_label >= counts.n_classes:
            return 0.0, 0.0, 0.0
        return float(p[pos_label]), float(r[pos_label]), float(f[pos_label])
    if average == "micro":
        tp, fp, fn = counts.tp.sum(), counts.fp.sum(), counts.fn.sum()
        p, r = float(_ratio(tp, tp + fp)), float(_ratio(tp, tp + fn))
        return p, r, float(_ratio(2 * p * r, p + r))
    if average == "macro":
        present = np.union1d(np.unique(y_true), np.unique(y_pred))
        return float(p[present].mean()), float(r[present].mean()), float(f[present].mean())
    raise ValueError(f"unknown averaging {average!r}")


@dataclass(frozen=True)
class SeparabilityReport:
    between: np.ndarray
    d_bet: float
    within: np.ndarray
    d_wit: float

    @property
    def B(self):
        return self.between

    @property
    def T(self):
        return self.within

    @property
    def d_B(self):
        return self.between.size

    @property
    def d_T(self):
        return self.within.size


def separability(points, labels, n_classes=None):
    """Average between-class (``d_bet``) and within-class (``d_wit``) variance.

    ``between`` sums squared class-mean differences over ordered class pairs
    and halves the total; ``within`` is the per-component squared deviation
    from the own-class mean, averaged over all samples. With ``n_classes``
    given, every id below it must have at least one point.
    """
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if points.ndim != 2 or labels.shape != (points.shape[0],):
        raise ValueError("points must be (n, d) with one label per row")
    classes = np.unique(labels)
    if classes.size == 0:
        raise ValueError("no samples")
    if n_classes is not None:
        missing = np.setdiff1d(np.arange(n_classes), classes)
        if missing.size:
            raise ValueError(f"classes without samples: {missing.tolist()}")
    means = np.stack([points[labels == c].mean(axis=0) for c in classes])
    diffs = means[:, None, :] - means[None, :, :]
    between = 0.5 * np.sum(diffs**2, axis=(0, 1))
    idx = np.searchsorted(classes, labels)
    within = np.sum((points - means[idx]) ** 2, axis=0) / points.shape[0]
    return SeparabilityReport(between, float(between.mean()), within, float(within.mean()))


@dataclass(frozen=True)
class EvalReport:
    name: str
    n_test: int
    accuracy: float
    precision: float
    recall: float
    fscore: float
    averaging: str
    d_bet: float
    d_wit: float
    tp: list
    fp: list
    tn: list
    fn: list

    def to_dict(self):
        return asdict(self)


def evaluate(name, y_true, y_pred, test_points, averaging="macro"):
    counts = confusion_counts(y_true, y_pred)
    p, r, f = precision_recall_fscore(y_true, y_pred, averaging)
    sep = separability(test_points, y_true)
    return EvalReport(
        name=name,
        n_test=int(len(y_true)),
        accuracy=accuracy(y_true, y_pred),
        precision=p,
        recall=r,
        fscore=f,
        averaging=averaging,
        d_bet=sep.d_bet,
        d_wit=sep.d_wit,
        tp=counts.tp.tolist(),
        fp=counts.fp.tolist(),
        tn=counts.tn.tolist(),
        fn=counts.fn.tolist(),
    )
