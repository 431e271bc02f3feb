"""Small dense-network engine: layers, exact backprop, Adam and a Jacobi eigensolver.

Everything works on float64 numpy arrays. Inputs to :func:`forward` may be a
single vector of shape ``(d,)`` or a batch of shape ``(n, d)``; weights are
stored ``(out, in)`` so a layer computes ``x @ W.T + b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("linear", "relu", "sigmoid", "tanh")


class TapeReuseError(RuntimeError):
    """Raised when a gradient tape is replayed a second time."""


def glorot_init(in_dim, out_dim, rng):
    """Glorot/Xavier uniform weights of shape ``(out_dim, in_dim)``."""
    if in_dim < 1 or out_dim < 1:
        raise ValueError(f"layer dimensions must be >= 1, got in={in_dim}, out={out_dim}")
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(out_dim, in_dim))


def _activate(name, pre):
    if name == "linear":
        return pre
    if name == "relu":
        return np.maximum(pre, 0.0)
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * pre))
    if name == "tanh":
        return np.tanh(pre)
    raise ValueError(f"unknown activation {name!r}")


def _activation_grad(name, pre, out):
    if name == "linear":
        return np.ones_like(pre)
    if name == "relu":
        return (pre > 0.0).astype(pre.dtype)
    if name == "sigmoid":
        return out * (1.0 - out)
    if name == "tanh":
        return 1.0 - out * out
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class DenseLayer:
    weights: np.ndarray
    bias: np.ndarray
    activation: str = "linear"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError(
                f"inconsistent layer shapes: weights {self.weights.shape}, bias {self.bias.shape}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @classmethod
    def glorot(cls, in_dim, out_dim, rng, activation="linear"):
        return cls(glorot_init(in_dim, out_dim, rng), np.zeros(out_dim), activation)

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]

    def params(self):
        return [self.weights, self.bias]


@dataclass
class GradientTape:
    """Forward intermediates for one pass through a layer stack."""

    layers: list
    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    vector_input: bool = False
    consumed: bool = False


def forward(layers, x):
    """Run ``x`` through ``layers``; return ``(output, tape)``."""
    x = np.asarray(x, dtype=np.float64)
    vector_input = x.ndim == 1
    h = x[None, :] if vector_input else x
    if not layers:
        raise ValueError("empty layer stack")
    if h.ndim != 2 or h.shape[1] != layers[0].in_dim:
        raise ValueError(
            f"input width {h.shape[-1]} does not match first layer width {layers[0].in_dim}"
        )
    tape = GradientTape(layers=list(layers), vector_input=vector_input)
    for layer in layers:
        if h.shape[1] != layer.in_dim:
            raise ValueError(f"layer expects width {layer.in_dim}, got {h.shape[1]}")
        pre = h @ layer.weights.T + layer.bias
        out = _activate(layer.activation, pre)
        tape.inputs.append(h)
        tape.pre.append(pre)
        tape.outputs.append(out)
        h = out
    return (h[0] if vector_input else h), tape


def backward(tape, upstream):
    """Backpropagate ``upstream`` = dL/d(output) through a recorded pass.

    Returns ``(param_grads, input_grad)`` where ``param_grads`` is a list of
    ``(dW, db)`` tuples aligned with the tape's layers.
    """
    if tape.consumed:
        raise TapeReuseError("gradient tape has already been consumed")
    tape.consumed = True
    g = np.asarray(upstream, dtype=np.float64)
    if tape.vector_input:
        g = g[None, :]
    if g.shape != tape.outputs[-1].shape:
        raise ValueError(f"upstream shape {g.shape} != output shape {tape.outputs[-1].shape}")
    grads = []
    for layer, h, pre, out in zip(
        reversed(tape.layers), reversed(tape.inputs), reversed(tape.pre), reversed(tape.outputs)
    ):
        g = g * _activation_grad(layer.activation, pre, out)
        grads.append((g.T @ h, g.sum(axis=0)))
        g = g @ layer.weights
    grads.reverse()
    return grads, (g[0] if tape.vector_input else g)


def mlp(sizes, rng, hidden_activation="relu", output_activation="linear"):
    """Glorot-initialised layer stack for widths ``sizes[0] -> ... -> sizes[-1]``."""
    layers = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        act = output_activation if i == len(sizes) - 2 else hidden_activation
        layers.append(DenseLayer.glorot(a, b, rng, act))
    return layers


@dataclass
class AdamState:
    lr: float = 1e-3
    beta_m: float = 0.9
    beta_v: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not (0 < self.beta_m < 1 and 0 < self.beta_v < 1):
            raise ValueError("beta_m and beta_v must lie in (0, 1)")
        if not self.eps > 0:
            raise ValueError("eps must be positive")


def adam_step(state, params, grads):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p) for p in params]
        state.second_moment = [np.zeros_like(p) for p in params]
    if len(state.first_moment) != len(params):
        raise ValueError("parameter list changed since the optimizer was initialised")
    state.step += 1
    t = state.step
    c_m = 1.0 - state.beta_m**t
    c_v = 1.0 - state.beta_v**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape or m.shape != p.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}")
        m *= state.beta_m
        m += (1.0 - state.beta_m) * g
        v *= state.beta_v
        v += (1.0 - state.beta_v) * g * g
        p -= state.lr * (m / c_m) / (np.sqrt(v / c_v) + state.eps)
    return params, state


def sym_eigen(a, tol=1e-9, max_sweeps=100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues in descending order
    and eigenvectors as orthonormal columns.
    """
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains non-finite entries")
    scale = max(np.abs(a).max(), 1.0)
    if np.abs(a - a.T).max() > tol * scale:
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    v = np.eye(n)
    # stop once the off-diagonal mass is at rounding level
    target = np.finfo(np.float64).eps * np.linalg.norm(a)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(a, 1) ** 2))
        if off <= target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q]
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :]
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    return values[order], v[:, order]
