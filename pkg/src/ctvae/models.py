"""AE, VAE, TVAE and CTVAE as scikit-learn style transformers.

All four share one numpy engine. A network is a dict of layer stacks:

* ``encoder``: ``x -> h1`` (AE: ``x -> h1 -> z``)
* ``mu`` / ``logvar``: heads ``h1 -> d_z`` (variational models only)
* ``hermaphrodite``: ``z -> h2 -> x_hat``
* ``decoder``: ``x_hat -> h3 -> z_hat`` (twin models only)

After fitting, ``transform`` returns the representation used downstream:
the bottleneck for AE, the mean head for VAE, and for the twin models the
decoder output obtained by feeding the features straight into the decoder.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .nn import AdamState, DenseLayer, adam_step, backward, forward, mlp
from .priors import ClassPriors, fit_priors

log = logging.getLogger(__name__)

KINDS = ("ae", "vae", "tvae", "ctvae")
_STACKS = {
    "ae": ("encoder", "hermaphrodite"),
    "vae": ("encoder", "mu", "logvar", "hermaphrodite"),
    "tvae": ("encoder", "mu", "logvar", "hermaphrodite", "decoder"),
    "ctvae": ("encoder", "mu", "logvar", "hermaphrodite", "decoder"),
}
SOURCE_TAGS = {"ae": "latent-z", "vae": "latent-mu", "tvae": "reconstruction-zhat", "ctvae": "reconstruction-zhat"}


@dataclass(frozen=True)
class ArchSpec:
    d_input: int
    h1: int
    d_z: int
    h2: int
    h3: int

    def __post_init__(self):
        if min(self.d_input, self.h1, self.d_z, self.h2, self.h3) < 1:
            raise ValueError(f"all layer widths must be >= 1: {self}")

    @classmethod
    def auto(cls, d_input, d_z=None, hidden=None):
        """Latent width ``floor(sqrt(d_input))``, hidden widths ``d_input // 2``."""
        if d_z is None:
            d_z = max(1, int(math.isqrt(d_input)))
        if hidden is None:
            hidden = max(1, d_input // 2)
        return cls(d_input, hidden, d_z, hidden, hidden)


TABLE3_ARCH = ArchSpec(d_input=115, h1=50, d_z=10, h2=50, h3=50)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    batch_size: int = 100
    lr: float = 1e-3
    seed: int = 0
    mc_samples: int = 1

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.mc_samples < 1:
            raise ValueError("epochs, batch_size and mc_samples must all be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")


@dataclass(frozen=True)
class Representation:
    matrix: np.ndarray
    source: str


def build_network(kind, arch, rng, activation="relu"):
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")
    net = {}
    if kind == "ae":
        net["encoder"] = mlp([arch.d_input, arch.h1, arch.d_z], rng, activation)
    else:
        net["encoder"] = mlp([arch.d_input, arch.h1], rng, activation, output_activation=activation)
        net["mu"] = [DenseLayer.glorot(arch.h1, arch.d_z, rng)]
        net["logvar"] = [DenseLayer.glorot(arch.h1, arch.d_z, rng)]
    net["hermaphrodite"] = mlp([arch.d_z, arch.h2, arch.d_input], rng, activation)
    if kind in ("tvae", "ctvae"):
        net["decoder"] = mlp([arch.d_input, arch.h3, arch.d_z], rng, activation)
    return net


def parameters(net, kind):
    """Flat parameter list in the canonical (serialization) order."""
    out = []
    for name in _STACKS[kind]:
        for layer in net[name]:
            out.extend(layer.params())
    return out


def _collect(grads_by_stack, net, kind):
    out = []
    for name in _STACKS[kind]:
        for dw, db in grads_by_stack[name]:
            out.extend([dw, db])
    return out


def loss_and_grads(net, kind, X, eta, labels=None, priors=None, betas=(1.0, 1.0, 1.0, 1.0), need_grad=True):
    """Batch loss and its exact gradient for one draw of standard-normal noise ``eta``.

    The returned gradient list follows :func:`parameters` order. With
    ``need_grad=False`` only the loss (and forward values) are computed.
    """
    b1, b2, b3, b4 = betas
    n = X.shape[0]
    values = {}
    if kind == "ae":
        z, enc_tape = forward(net["encoder"], X)
        x_hat, herm_tape = forward(net["hermaphrodite"], z)
        diff_x = x_hat - X
        loss = np.sum(diff_x**2) / n
        values.update(z=z, x_hat=x_hat)
        if not need_grad:
            return loss, None, values
        herm_grads, dz = backward(herm_tape, 2.0 * diff_x / n)
        enc_grads, _ = backward(enc_tape, dz)
        return loss, _collect({"encoder": enc_grads, "hermaphrodite": herm_grads}, net, kind), values

    h, enc_tape = forward(net["encoder"], X)
    mu, mu_tape = forward(net["mu"], h)
    logvar, lv_tape = forward(net["logvar"], h)
    sigma = np.exp(0.5 * logvar)
    if kind == "ctvae":
        if priors is None or labels is None:
            raise ValueError("the constrained model needs labels and class priors")
        targets = priors.targets(labels)
        eps = targets + priors.sigma[labels] * eta
    else:
        eps = eta
    z = mu + sigma * eps
    x_hat, herm_tape = forward(net["hermaphrodite"], z)
    diff_x = x_hat - X
    kl = 0.5 * np.sum(-1.0 - logvar + mu**2 + np.exp(logvar))
    loss = np.sum(diff_x**2) + b2 * kl
    values.update(mu=mu, logvar=logvar, z=z, x_hat=x_hat)
    twin = kind in ("tvae", "ctvae")
    if twin:
        z_hat, dec_tape = forward(net["decoder"], x_hat)
        diff_z = z - z_hat
        loss += b1 * np.sum(diff_z**2)
        values["z_hat"] = z_hat
        if kind == "ctvae":
            loss += b3 * np.sum((z - targets) ** 2) + b4 * np.sum((z_hat - targets) ** 2)
    loss /= n
    if not need_grad:
        return loss, None, values

    grads = {}
    dx_hat = 2.0 * diff_x / n
    dz = np.zeros_like(z)
    if twin:
        dz_hat = -2.0 * b1 * diff_z / n
        dz += 2.0 * b1 * diff_z / n
        if kind == "ctvae":
            dz_hat += 2.0 * b4 * (z_hat - targets) / n
            dz += 2.0 * b3 * (z - targets) / n
        grads["decoder"], dx_from_dec = backward(dec_tape, dz_hat)
        dx_hat = dx_hat + dx_from_dec
    grads["hermaphrodite"], dz_from_herm = backward(herm_tape, dx_hat)
    dz += dz_from_herm
    dmu = dz + b2 * mu / n
    dlogvar = dz * eps * 0.5 * sigma + 0.5 * b2 * (np.exp(logvar) - 1.0) / n
    grads["mu"], dh_mu = backward(mu_tape, dmu)
    grads["logvar"], dh_lv = backward(lv_tape, dlogvar)
    grads["encoder"], _ = backward(enc_tape, dh_mu + dh_lv)
    return loss, _collect(grads, net, kind), values


def _validate_betas(betas):
    betas = tuple(float(b) for b in betas)
    if len(betas) != 4 or min(betas) < 0:
        raise ValueError("betas must be four non-negative weights")
    return betas


class _BaseAutoEncoder(TransformerMixin, BaseEstimator):
    _kind = None

    def __init__(
        self,
        latent_dim=None,
        hidden=None,
        epochs=300,
        batch_size=100,
        lr=1e-3,
        mc_samples=1,
        betas=(1.0, 1.0, 1.0, 1.0),
        seed=0,
        activation="relu",
    ):
        self.latent_dim = latent_dim
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.mc_samples = mc_samples
        self.betas = betas
        self.seed = seed
        self.activation = activation

    @property
    def kind(self):
        return self._kind

    def _train_config(self):
        return TrainConfig(self.epochs, self.batch_size, self.lr, self.seed, self.mc_samples)

    def _prepare(self, X, y):
        return None

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        cfg = self._train_config()
        betas = _validate_betas(self.betas)
        if y is not None:
            y = np.asarray(y, dtype=np.int64)
            if y.shape != (X.shape[0],):
                raise ValueError("y must have one label per row of X")
        self.arch_ = ArchSpec.auto(X.shape[1], self.latent_dim, self.hidden)
        self.n_features_in_ = X.shape[1]
        priors = self._prepare(X, y)
        rng = np.random.default_rng(cfg.seed)
        self.network_ = build_network(self._kind, self.arch_, rng, self.activation)
        params = parameters(self.network_, self._kind)
        opt = AdamState(lr=cfg.lr)
        n = X.shape[0]
        history = []
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                if cfg.mc_samples > 1:
                    idx = np.tile(idx, cfg.mc_samples)
                xb = X[idx]
                yb = y[idx] if y is not None else None
                eta = rng.standard_normal((idx.size, self.arch_.d_z))
                loss, grads, _ = loss_and_grads(self.network_, self._kind, xb, eta, yb, priors, betas)
                if not np.isfinite(loss):
                    raise FloatingPointError(f"loss became non-finite at epoch {epoch + 1}")
                adam_step(opt, params, grads)
                total += loss * idx.size / cfg.mc_samples
            history.append(total / n)
            log.debug("%s epoch %d loss %.6g", self._kind, epoch + 1, history[-1])
        self.loss_history_ = np.asarray(history)
        return self

    def _check_input(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X

    def latent_mean(self, X):
        """Encoder output: bottleneck for AE, mean head otherwise."""
        X = self._check_input(X)
        h, _ = forward(self.network_["encoder"], X)
        if self._kind == "ae":
            return h
        return forward(self.network_["mu"], h)[0]

    def transform(self, X):
        X = self._check_input(X)
        if self._kind in ("tvae", "ctvae"):
            return forward(self.network_["decoder"], X)[0]
        return self.latent_mean(X)

    def reconstruct(self, X):
        """``x -> x_hat`` through encoder mean and hermaphrodite (no sampling)."""
        return forward(self.network_["hermaphrodite"], self.latent_mean(X))[0]

    def score(self, X, y=None):
        """Negative mean squared reconstruction error."""
        X = self._check_input(X)
        return -float(np.mean(np.sum((self.reconstruct(X) - X) ** 2, axis=1)))


class AutoEncoder(_BaseAutoEncoder):
    """Plain auto-encoder; representation is the bottleneck ``z``."""

    _kind = "ae"


class VariationalAutoEncoder(_BaseAutoEncoder):
    """VAE; representation is the encoder mean head (no sampling)."""

    _kind = "vae"


class TwinVAE(_BaseAutoEncoder):
    """Encoder, hermaphrodite and decoder trained without labels."""

    _kind = "tvae"


class ConstrainedTwinVAE(_BaseAutoEncoder):
    """Twin VAE whose latent noise is drawn around per-class targets.

    ``prior="transform"`` builds the targets by mean dispersal on a PCA
    projection of the training data, ``prior="fix"`` uses ``scale * c`` in
    every coordinate. Labels are needed by ``fit`` only.
    """

    _kind = "ctvae"

    def __init__(
        self,
        latent_dim=None,
        hidden=None,
        epochs=300,
        batch_size=100,
        lr=1e-3,
        mc_samples=1,
        betas=(1.0, 1.0, 1.0, 1.0),
        seed=0,
        activation="relu",
        scale=20.0,
        prior="transform",
        priors=None,
    ):
        super().__init__(latent_dim, hidden, epochs, batch_size, lr, mc_samples, betas, seed, activation)
        self.scale = scale
        self.prior = prior
        self.priors = priors

    def _prepare(self, X, y):
        if y is None:
            raise ValueError("the constrained model needs class labels to fit")
        n_classes = int(y.max()) + 1
        if np.any(np.bincount(y, minlength=n_classes) == 0):
            raise ValueError("every class id in [0, max label] must have samples")
        if self.priors is not None:
            priors = self.priors
            if priors.d_z != self.arch_.d_z or priors.n_classes < n_classes:
                raise ValueError("supplied priors do not match the latent width or classes")
        else:
            priors = fit_priors(X, y, self.arch_.d_z, self.scale, self.prior, n_classes)
        self.priors_ = priors
        return priors

    def sample_latent(self, X, y, seed=0):
        """Draw ``z`` with the class-conditional noise (training-time view)."""
        X = self._check_input(X)
        y = np.asarray(y, dtype=np.int64)
        rng = np.random.default_rng(seed)
        eta = rng.standard_normal((X.shape[0], self.arch_.d_z))
        _, _, values = loss_and_grads(
            self.network_, self._kind, X, eta, y, self.priors_, _validate_betas(self.betas), need_grad=False
        )
        return values["z"]


MODEL_CLASSES = {
    "ae": AutoEncoder,
    "vae": VariationalAutoEncoder,
    "tvae": TwinVAE,
    "ctvae": ConstrainedTwinVAE,
}


def make_model(kind, cfg=None, arch=None, **kwargs):
    if kind not in MODEL_CLASSES:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")
    cfg = cfg or TrainConfig()
    params = dict(
        epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr, seed=cfg.seed, mc_samples=cfg.mc_samples
    )
    if arch is not None:
        if arch.h1 != arch.h2 or arch.h2 != arch.h3:
            raise ValueError("estimators use one hidden width; pass equal h1, h2, h3")
        params.update(latent_dim=arch.d_z, hidden=arch.h1)
    params.update(kwargs)
    return MODEL_CLASSES[kind](**params)


def train(kind, train_data, priors=None, cfg=None, arch=None, **kwargs):
    """Fit a model of ``kind`` on a Dataset; returns ``(model, loss_history)``."""
    if train_data.n == 0:
        raise ValueError("cannot train on an empty dataset")
    if kind == "ctvae":
        if priors is None:
            raise ValueError("the constrained model requires class priors")
        kwargs["priors"] = priors
    model = make_model(kind, cfg, arch, **kwargs)
    model.fit(train_data.features, train_data.labels if kind == "ctvae" else None)
    return model, model.loss_history_


def extract(model, data):
    """Representation of a Dataset's features; labels are never read."""
    return Representation(model.transform(data.features), SOURCE_TAGS[model.kind])


# ---------------------------------------------------------------- model files

MAGIC = b"CTVAEMDL"
FORMAT_VERSION = 1


def save_model(path, model, normalizer=None):
    """Write ``model`` (and optional min/max normalizer) to a single binary file.

    Layout (little-endian): 8-byte magic, uint32 format version, uint64 header
    length, UTF-8 JSON header, then every tensor listed in the header as raw
    float64 in header order.
    """
    check_is_fitted(model, "network_")
    kind = model.kind
    tensors = []
    for name in _STACKS[kind]:
        for i, layer in enumerate(model.network_[name]):
            tensors.append((f"{name}.{i}.weights", layer.weights, layer.activation))
            tensors.append((f"{name}.{i}.bias", layer.bias, layer.activation))
    params = model.get_params(deep=False)
    params.pop("priors", None)
    params["betas"] = list(params["betas"])
    header = {
        "kind": kind,
        "arch": asdict(model.arch_),
        "params": params,
        "tensors": [{"name": n, "shape": list(t.shape), "activation": a} for n, t, a in tensors],
        "priors": model.priors_.to_dict() if kind == "ctvae" else None,
        "normalizer": None
        if normalizer is None
        else {"min": normalizer.data_min_.tolist(), "max": normalizer.data_max_.tolist()},
        "loss_history": model.loss_history_.tolist(),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for _, t, _ in tensors:
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def load_model(path):
    """Inverse of :func:`save_model`; returns ``(model, normalizer or None)``."""
    from .data import NormStats

    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path} is not a model file")
    version, hlen = struct.unpack_from("<IQ", raw, 8)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version}")
    offset = 8 + struct.calcsize("<IQ")
    header = json.loads(raw[offset : offset + hlen].decode("utf-8"))
    offset += hlen
    kind = header["kind"]
    params = dict(header["params"])
    params["betas"] = tuple(params["betas"])
    model = MODEL_CLASSES[kind](**params)
    arrays = {}
    for spec in header["tensors"]:
        count = int(np.prod(spec["shape"]))
        arrays[spec["name"]] = (
            np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(spec["shape"]).astype(np.float64),
            spec["activation"],
        )
        offset += 8 * count
    if offset != len(raw):
        raise ValueError("trailing bytes in model file")
    net = {}
    for name in _STACKS[kind]:
        layers = []
        i = 0
        while f"{name}.{i}.weights" in arrays:
            w, act = arrays[f"{name}.{i}.weights"]
            b, _ = arrays[f"{name}.{i}.bias"]
            layers.append(DenseLayer(w, b, act))
            i += 1
        net[name] = layers
    model.network_ = net
    model.arch_ = ArchSpec(**header["arch"])
    model.n_features_in_ = model.arch_.d_input
    model.loss_history_ = np.asarray(header["loss_history"])
    if header["priors"] is not None:
        model.priors_ = ClassPriors.from_dict(header["priors"])
    normalizer = None
    if header["normalizer"] is not None:
        normalizer = NormStats(np.asarray(header["normalizer"]["min"]), np.asarray(header["normalizer"]["max"])).to_normalizer()
    return model, normalizer
