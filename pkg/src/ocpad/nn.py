"""Small dense network substrate: layers, forward/backward passes, Adam.

All arithmetic is float64. Matrices are plain numpy arrays laid out
row-per-sample, so a batch of ``k`` inputs of width ``n`` is a ``(k, n)``
array and a layer's weights are ``(out, in)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ShapeError, TrainingError

ACTIVATIONS = ("relu", "identity")


def as_matrix(x, name="input"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {x.shape}")
    return x


@dataclass
class DenseLayer:
    weights: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weights.ndim != 2:
            raise ShapeError(f"weights must be 2-D, got {self.weights.shape}")
        if self.bias.shape[0] != self.weights.shape[0]:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} != weight rows {self.weights.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def initialized(cls, in_dim, out_dim, activation, rng):
        """He-uniform init for relu layers, Xavier-uniform otherwise; zero bias."""
        if activation == "relu":
            limit = np.sqrt(6.0 / in_dim)
        else:
            limit = np.sqrt(6.0 / (in_dim + out_dim))
        weights = rng.uniform(-limit, limit, size=(out_dim, in_dim))
        return cls(weights, np.zeros(out_dim), activation)


def _activate(pre, activation):
    if activation == "relu":
        return np.maximum(pre, 0.0)
    return pre


def dense_forward(layer: DenseLayer, x) -> np.ndarray:
    x = as_matrix(x)
    if x.shape[1] != layer.in_dim:
        raise ShapeError(f"input has {x.shape[1]} columns, layer expects {layer.in_dim}")
    return _activate(x @ layer.weights.T + layer.bias, layer.activation)


class Mlp:
    """An ordered stack of dense layers.

    ``version`` is bumped by :meth:`touch` whenever parameters change, which
    lets :func:`mlp_backward` reject caches from an earlier parameter state.
    """

    def __init__(self, layers):
        self.layers = list(layers)
        if not self.layers:
            raise ShapeError("an Mlp needs at least one layer")
        for i, (a, b) in enumerate(zip(self.layers, self.layers[1:])):
            if a.out_dim != b.in_dim:
                raise ShapeError(
                    f"layer {i} outputs {a.out_dim} but layer {i + 1} expects {b.in_dim}"
                )
        self.version = 0

    @classmethod
    def build(cls, in_dim, widths, rng, hidden="relu", last="identity"):
        dims = [in_dim, *widths]
        layers = []
        for i in range(len(widths)):
            act = last if i == len(widths) - 1 else hidden
            layers.append(DenseLayer.initialized(dims[i], dims[i + 1], act, rng))
        return cls(layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self):
        out = []
        for layer in self.layers:
            out.extend((layer.weights, layer.bias))
        return out

    def touch(self):
        self.version += 1

    def copy(self):
        return Mlp(
            DenseLayer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers
        )


@dataclass(frozen=True)
class ForwardCache:
    owner: int
    version: int
    inputs: list = field(repr=False)
    pre: list = field(repr=False)


def mlp_forward(mlp: Mlp, x):
    x = as_matrix(x)
    if x.shape[1] != mlp.in_dim:
        raise ShapeError(f"input has {x.shape[1]} columns, network expects {mlp.in_dim}")
    inputs, pre = [], []
    h = x
    for layer in mlp.layers:
        inputs.append(h)
        z = h @ layer.weights.T + layer.bias
        pre.append(z)
        h = _activate(z, layer.activation)
    return h, ForwardCache(id(mlp), mlp.version, inputs, pre)


def mlp_backward(mlp: Mlp, cache: ForwardCache, output_grad):
    """Backpropagate ``output_grad`` (dLoss/dOutput) through the network.

    Returns ``(param_grads, input_grad)`` where ``param_grads`` is aligned
    with ``mlp.parameters()``.
    """
    if cache.owner != id(mlp) or len(cache.pre) != len(mlp.layers):
        raise ContractError("forward cache was produced by a different network")
    if cache.version != mlp.version:
        raise ContractError(
            f"stale forward cache (version {cache.version}, network at {mlp.version})"
        )
    g = as_matrix(output_grad, "output_grad")
    if g.shape != cache.pre[-1].shape:
        raise ShapeError(f"output_grad shape {g.shape} != output shape {cache.pre[-1].shape}")
    grads = [None] * (2 * len(mlp.layers))
    for i in range(len(mlp.layers) - 1, -1, -1):
        layer = mlp.layers[i]
        if layer.activation == "relu":
            g = g * (cache.pre[i] > 0.0)
        grads[2 * i] = g.T @ cache.inputs[i]
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ layer.weights
    return grads, g


class Adam:
    """Adam with bias correction, updating parameter arrays in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        if len(params) != len(self.m) or len(grads) != len(params):
            raise ShapeError("parameter/gradient lists do not match optimizer state")
        for i, (p, g) in enumerate(zip(params, grads)):
            if p.shape != self.m[i].shape or g.shape != p.shape:
                raise ShapeError(f"parameter {i}: shape mismatch {p.shape} vs {g.shape}")
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient in layer {i // 2}")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def gradient_check(loss_fn, point, h=1e-5):
    """Max relative error between ``loss_fn``'s analytic gradient and central differences.

    ``loss_fn(x)`` must return ``(value, grad)`` with ``grad`` shaped like ``x``.
    A non-finite comparison returns ``inf``.
    """
    x = np.array(point, dtype=np.float64)
    _, analytic = loss_fn(x.copy())
    analytic = np.asarray(analytic, dtype=np.float64).reshape(x.shape)
    numeric = np.empty_like(x)
    flat, nflat = x.reshape(-1), numeric.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + h
        up = loss_fn(x.copy())[0]
        flat[j] = orig - h
        down = loss_fn(x.copy())[0]
        flat[j] = orig
        nflat[j] = (up - down) / (2.0 * h)
    if not (np.all(np.isfinite(analytic)) and np.all(np.isfinite(numeric))):
        return float("inf")
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
