"""End-to-end experiment helpers shared by the command line and the tests."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .classify import RandomForestClassifier
from .data import apply_normalizer, fit_normalizer, make_blobs
from .metrics import evaluate, separability
from .models import ConstrainedTwinVAE
from .priors import PCA

log = logging.getLogger(__name__)

# Settings for the synthetic blob benchmark. The library defaults (ReLU,
# hidden width d // 2, scale 20, lr 1e-3, batch 100) leave the 2-D decoder
# output of a 10-feature problem noticeably worse than the raw inputs at 300
# epochs; these values were picked on a small grid over seeds 0-4.
BLOB_PRESET = dict(
    latent_dim=2,
    hidden=20,
    activation="tanh",
    lr=1e-2,
    batch_size=25,
    epochs=300,
    scale=1.0,
)


@dataclass(frozen=True)
class Split:
    """Raw and normalized train/test pair plus the fitted scaling."""

    train_raw: object
    test_raw: object
    train: object
    test: object
    stats: object


def normalized_split(train, test):
    stats = fit_normalizer(train)
    return Split(train, test, apply_normalizer(stats, train), apply_normalizer(stats, test), stats)


def blob_split(spec):
    return normalized_split(*make_blobs(spec))


def score_representation(name, train_x, train_y, test_x, test_y, n_estimators=100, seed=0, averaging="macro"):
    """Fit a forest on one representation and evaluate it on the test rows.

    Returns ``(EvalReport, forest)``.
    """
    forest = RandomForestClassifier(n_estimators=n_estimators, seed=seed).fit(train_x, train_y)
    report = evaluate(name, test_y, forest.predict(test_x), test_x, averaging)
    return report, forest


def run_simulation(spec, model_params=None, n_estimators=100, seed=None):
    """Blobs, constrained model, decoder representation, and forest scores on ``x`` and ``z_hat``.

    Returns a dict with the fitted model, the split, the two EvalReports and
    the test-set scatter panels ``x`` (2-D PCA of the inputs), ``mu``, ``z``
    and ``zhat``.
    """
    seed = spec.seed if seed is None else seed
    params = dict(BLOB_PRESET, seed=seed)
    params.update(model_params or {})
    data = blob_split(spec)
    model = ConstrainedTwinVAE(**params).fit(data.train.features, data.train.labels)
    ztr = model.transform(data.train.features)
    zte = model.transform(data.test.features)
    rep_x, _ = score_representation(
        "x", data.train.features, data.train.labels, data.test.features, data.test.labels, n_estimators, seed
    )
    rep_z, forest = score_representation("zhat", ztr, data.train.labels, zte, data.test.labels, n_estimators, seed)
    pca = PCA(n_components=2).fit(data.train.features)
    panels = {
        "x": pca.transform(data.test.features),
        "mu": model.latent_mean(data.test.features),
        "z": model.sample_latent(data.test.features, data.test.labels, seed=seed),
        "zhat": zte,
    }
    return {"model": model, "data": data, "reports": [rep_x, rep_z], "panels": panels, "forest": forest}


def run_ablation(spec, model_params=None, n_estimators=100, seed=None):
    """Train the transform and fixed-mean variants on identical data; returns their EvalReports."""
    seed = spec.seed if seed is None else seed
    data = blob_split(spec)
    reports = []
    models = {}
    for variant in ("transform", "fix"):
        params = dict(BLOB_PRESET, seed=seed, prior=variant)
        params.update(model_params or {})
        params["prior"] = variant
        model = ConstrainedTwinVAE(**params).fit(data.train.features, data.train.labels)
        rep, _ = score_representation(
            f"ctvae-{variant}",
            model.transform(data.train.features),
            data.train.labels,
            model.transform(data.test.features),
            data.test.labels,
            n_estimators,
            seed,
        )
        reports.append(rep)
        models[variant] = model
    return {"models": models, "data": data, "reports": reports}


def separation_pair(model, dataset):
    """Separability of the normalized inputs and of the model representation."""
    return separability(dataset.features, dataset.labels), separability(model.transform(dataset.features), dataset.labels)
