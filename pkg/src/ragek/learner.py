"""A small fully-connected classifier trained with hand-written backprop.

Parameters live in one flat float64 vector so that they line up one-to-one
with the gradient coordinates the sparsifiers select. The layout is
layer-major: for each layer, the ``(fan_in, fan_out)`` weight matrix in
row-major order, then the ``fan_out`` bias.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .vectors import StructuralError

_MODEL_MAGIC = b"RGKM"
_MODEL_VERSION = 1


class NumericalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    layer_sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise StructuralError(f"need at least input and output sizes, got {sizes}")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def num_params(self) -> int:
        s = self.layer_sizes
        return sum(a * b + b for a, b in zip(s[:-1], s[1:]))

    @property
    def num_classes(self) -> int:
        return self.layer_sizes[-1]

    def blocks(self):
        """Yield ``(w_slice, b_slice, fan_in, fan_out)`` per layer."""
        off = 0
        for fi, fo in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            w = slice(off, off + fi * fo)
            off += fi * fo
            b = slice(off, off + fo)
            off += fo
            yield w, b, fi, fo


def unflatten(spec: ModelSpec, theta):
    theta = np.asarray(theta, dtype=np.float64)
    if theta.size != spec.num_params:
        raise StructuralError(f"expected {spec.num_params} parameters, got {theta.size}")
    return [(theta[w].reshape(fi, fo), theta[b]) for w, b, fi, fo in spec.blocks()]


def flatten(layers) -> np.ndarray:
    return np.concatenate([np.concatenate([W.ravel(), b.ravel()]) for W, b in layers])


def init_params(spec: ModelSpec, rng) -> np.ndarray:
    """Glorot-uniform weights, zero biases."""
    theta = np.zeros(spec.num_params)
    for w, _, fi, fo in spec.blocks():
        lim = np.sqrt(6.0 / (fi + fo))
        theta[w] = rng.uniform(-lim, lim, size=fi * fo)
    return theta


def _forward(spec, theta, X):
    layers = unflatten(spec, theta)
    acts = [X]
    h = X
    for i, (W, b) in enumerate(layers):
        z = h @ W + b
        h = z if i == len(layers) - 1 else np.maximum(z, 0.0)
        acts.append(h)
    return layers, acts


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _check_batch(spec, X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[1] != spec.layer_sizes[0]:
        raise StructuralError(f"features must be (n, {spec.layer_sizes[0]}), got {X.shape}")
    if y.shape != (X.shape[0],):
        raise StructuralError("one label per sample is required")
    if y.size and (y.min() < 0 or y.max() >= spec.num_classes):
        raise StructuralError("label out of range")
    return X, y


def loss_and_gradient(spec: ModelSpec, theta, X, y):
    """Mean softmax cross-entropy over the batch and its gradient w.r.t. ``theta``."""
    X, y = _check_batch(spec, X, y)
    n = X.shape[0]
    layers, acts = _forward(spec, theta, X)
    logp = _log_softmax(acts[-1])
    if not np.all(np.isfinite(logp)):
        raise NumericalError("non-finite activations")
    loss = -logp[np.arange(n), y].mean()

    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grad = np.empty(spec.num_params)
    blocks = list(spec.blocks())
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        w_sl, b_sl, _, _ = blocks[i]
        grad[w_sl] = (acts[i].T @ delta).ravel()
        grad[b_sl] = delta.sum(axis=0)
        if i:
            delta = (delta @ W.T) * (acts[i] > 0)
    return float(loss), grad


def evaluate(spec: ModelSpec, theta, X, y):
    """Return ``(accuracy, mean_loss)`` of the model on ``(X, y)``."""
    X, y = _check_batch(spec, X, y)
    if X.shape[0] == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    _, acts = _forward(spec, theta, X)
    logp = _log_softmax(acts[-1])
    acc = float(np.mean(np.argmax(logp, axis=1) == y))
    return acc, float(-logp[np.arange(y.size), y].mean())


class SGD:
    def __init__(self, lr):
        self.lr = lr
        self.steps = 0

    def apply(self, theta, g):
        g = _finite(g, theta)
        self.steps += 1
        return theta - self.lr * g

    def reset(self):
        self.steps = 0


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.reset()

    def reset(self):
        self.m = None
        self.v = None
        self.steps = 0

    def apply(self, theta, g):
        g = _finite(g, theta)
        if self.m is None:
            self.m = np.zeros_like(g)
            self.v = np.zeros_like(g)
        self.steps += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        m_hat = self.m / (1 - self.beta1**self.steps)
        v_hat = self.v / (1 - self.beta2**self.steps)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _finite(g, theta):
    g = np.asarray(g, dtype=np.float64)
    if g.shape != np.shape(theta):
        raise StructuralError(f"gradient shape {g.shape} does not match parameters {np.shape(theta)}")
    if not np.all(np.isfinite(g)):
        raise NumericalError("non-finite gradient")
    return g


def make_optimizer(kind, lr, **kw):
    if kind == "sgd":
        return SGD(lr)
    if kind == "adam":
        return Adam(lr, **kw)
    raise ValueError(f"unknown optimizer {kind!r}")


def write_model(fh, spec: ModelSpec, theta):
    """``RGKM`` magic, u32 version, u32 layer count, u32 sizes, u64 d, then <f8 params."""
    theta = np.ascontiguousarray(theta, dtype="<f8")
    sizes = spec.layer_sizes
    fh.write(_MODEL_MAGIC)
    fh.write(struct.pack(f"<II{len(sizes)}I", _MODEL_VERSION, len(sizes), *sizes))
    fh.write(struct.pack("<Q", theta.size))
    fh.write(theta.tobytes())


def read_model(fh):
    if fh.read(4) != _MODEL_MAGIC:
        raise StructuralError("not a model checkpoint")
    version, n = struct.unpack("<II", fh.read(8))
    if version != _MODEL_VERSION:
        raise StructuralError(f"unsupported checkpoint version {version}")
    spec = ModelSpec(struct.unpack(f"<{n}I", fh.read(4 * n)))
    (d,) = struct.unpack("<Q", fh.read(8))
    if d != spec.num_params:
        raise StructuralError(f"checkpoint holds {d} parameters, spec needs {spec.num_params}")
    raw = fh.read(8 * d)
    if len(raw) != 8 * d:
        raise StructuralError("truncated checkpoint")
    return spec, np.frombuffer(raw, dtype="<f8").astype(np.float64)
