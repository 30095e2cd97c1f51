"""Dense MLPs with hand-rolled reverse-mode gradients and an Adam optimizer.

Everything is float64 numpy. The only network topology supported is a
fully-connected stack with tanh hidden activations and an identity output
layer; that is all the agents need, and keeping the backward pass explicit
makes gradient checks against finite differences straightforward.

Parameters live in one contiguous flat vector per network; the per-layer
weight matrices and bias vectors are reshaped views into it, so flattening
is a copy, loading is a single write, and the optimizer updates in place.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


_LAYOUT_CACHE: dict[tuple, tuple] = {}


def _layout(layer_sizes):
    """(offset, size, shape) triples for each weight matrix and bias vector."""
    try:
        return _LAYOUT_CACHE[layer_sizes]
    except KeyError:
        pass
    slots = []
    ofs = 0
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        slots.append((ofs, fan_in * fan_out, (fan_in, fan_out)))
        ofs += fan_in * fan_out
        slots.append((ofs, fan_out, (fan_out,)))
        ofs += fan_out
    _LAYOUT_CACHE[layer_sizes] = (tuple(slots), ofs)
    return _LAYOUT_CACHE[layer_sizes]


class _FlatParams:
    """Flat float64 buffer plus per-layer views (weights[i], biases[i])."""

    def __init__(self, layer_sizes, flat=None):
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        slots, total = _layout(self.layer_sizes)
        self._flat = np.zeros(total) if flat is None else flat
        if self._flat.shape != (total,):
            raise ValueError(f"flat length {self._flat.shape} != ({total},)")
        views = [self._flat[o : o + n].reshape(s) for o, n, s in slots]
        self.weights = views[0::2]
        self.biases = views[1::2]


class Mlp(_FlatParams):
    """Feed-forward net: tanh hidden layers, identity output.

    Weights are stored row-major as (fan_in, fan_out) matrices so the batch
    forward pass is `X @ W + b`. Layer sizes are fixed at construction.
    """

    def __init__(self, layer_sizes, flat=None):
        if len(layer_sizes) < 2:
            raise ValueError(f"need at least input and output sizes, got {layer_sizes}")
        super().__init__(layer_sizes, flat)

    @classmethod
    def init(cls, layer_sizes, rng: np.random.Generator) -> "Mlp":
        """Seeded uniform fan-in init: U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
        net = cls(layer_sizes)
        for w, b in zip(net.weights, net.biases):
            bound = 1.0 / np.sqrt(w.shape[0])
            w[...] = rng.uniform(-bound, bound, size=w.shape)
            b[...] = rng.uniform(-bound, bound, size=b.shape)
        return net

    @classmethod
    def zeros(cls, layer_sizes) -> "Mlp":
        return cls(layer_sizes)

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def param_count(self) -> int:
        return self._flat.size

    def copy(self) -> "Mlp":
        return Mlp(self.layer_sizes, self._flat.copy())

    def to_checkpoint(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "activation": "tanh",
            "flat_params": self._flat.tolist(),
        }

    @classmethod
    def from_checkpoint(cls, obj: dict) -> "Mlp":
        if obj.get("activation") != "tanh":
            raise ValueError(f"unsupported activation {obj.get('activation')!r}")
        net = cls.zeros(obj["layer_sizes"])
        params_load(net, np.asarray(obj["flat_params"], dtype=np.float64))
        return net

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_checkpoint(), f)

    @classmethod
    def load(cls, path) -> "Mlp":
        with open(path) as f:
            return cls.from_checkpoint(json.load(f))


class Grads(_FlatParams):
    """Per-layer gradient arrays, shape-congruent with an Mlp's parameters.

    d_weights / d_biases are views into one flat buffer; flat() exposes
    that buffer directly (read-only by convention).
    """

    def __init__(self, layer_sizes, flat=None):
        super().__init__(layer_sizes, flat)
        self.d_weights = self.weights
        self.d_biases = self.biases

    @classmethod
    def zeros_like(cls, net: Mlp) -> "Grads":
        return cls(net.layer_sizes)

    def zero(self) -> None:
        self._flat.fill(0.0)

    def flat(self) -> np.ndarray:
        return self._flat


def mlp_forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Forward pass for a single observation vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.in_dim,):
        raise ValueError(f"input shape {x.shape} != ({net.in_dim},)")
    return mlp_forward_batch(net, x[None, :])[0]


def mlp_forward_batch(net: Mlp, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.in_dim:
        raise ValueError(f"batch shape {X.shape} incompatible with input size {net.in_dim}")
    h = X
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i != last:
            h = np.tanh(h)
    return h


def mlp_forward_cached(net: Mlp, X: np.ndarray):
    """Forward pass keeping per-layer inputs for the backward pass.

    Returns (output, cache) where cache[i] is the input to layer i (the
    tanh-activated output of layer i-1, or X itself for i=0).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.in_dim:
        raise ValueError(f"batch shape {X.shape} incompatible with input size {net.in_dim}")
    cache = [X]
    h = X
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i != last:
            h = np.tanh(h)
            cache.append(h)
    return h, cache


def mlp_backward_batch(net: Mlp, cache, upstream: np.ndarray):
    """Reverse-mode pass. Returns (Grads summed over the batch, dX per row).

    `upstream` is d(loss)/d(output), shape (batch, out_dim). tanh' is
    recovered from the cached activations as 1 - h^2.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (cache[0].shape[0], net.out_dim):
        raise ValueError(
            f"upstream shape {upstream.shape} != ({cache[0].shape[0]}, {net.out_dim})"
        )
    grads = Grads(net.layer_sizes)
    delta = upstream
    for i in range(len(net.weights) - 1, -1, -1):
        np.matmul(cache[i].T, delta, out=grads.d_weights[i])
        np.sum(delta, axis=0, out=grads.d_biases[i])
        delta = delta @ net.weights[i].T
        if i > 0:
            delta *= 1.0 - cache[i] ** 2
    return grads, delta


def mlp_input_grad_batch(net: Mlp, cache, upstream: np.ndarray) -> np.ndarray:
    """d(upstream . output)/d(input) per row, skipping parameter gradients."""
    delta = np.asarray(upstream, dtype=np.float64)
    for i in range(len(net.weights) - 1, -1, -1):
        delta = delta @ net.weights[i].T
        if i > 0:
            delta *= 1.0 - cache[i] ** 2
    return delta


def mlp_backward(net: Mlp, x: np.ndarray, upstream: np.ndarray) -> Grads:
    """Gradient of (upstream . output) w.r.t. the parameters, single input."""
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if x.shape != (net.in_dim,):
        raise ValueError(f"input shape {x.shape} != ({net.in_dim},)")
    if upstream.shape != (net.out_dim,):
        raise ValueError(f"upstream shape {upstream.shape} != ({net.out_dim},)")
    _, cache = mlp_forward_cached(net, x[None, :])
    grads, _ = mlp_backward_batch(net, cache, upstream[None, :])
    return grads


def params_flatten(net: Mlp) -> np.ndarray:
    return net._flat.copy()


def params_load(net: Mlp, flat: np.ndarray) -> None:
    flat = np.asarray(flat, dtype=np.float64)
    if flat.shape != net._flat.shape:
        raise ValueError(f"flat length {flat.shape} != {net._flat.shape}")
    net._flat[...] = flat


@dataclass
class AdamState:
    """Bias-corrected Adam over a flat parameter vector."""

    size: int
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)

    def __post_init__(self):
        self.m = np.zeros(self.size)
        self.v = np.zeros(self.size)
        self._scratch = np.zeros((2, self.size))

    def reset(self) -> None:
        self.step = 0
        self.m.fill(0.0)
        self.v.fill(0.0)


def _adam_update_inplace(
    state: AdamState, params: np.ndarray, grads: np.ndarray, check_nan: bool = True
) -> None:
    if check_nan and np.isnan(grads).any():
        raise ValueError("NaN in gradients")
    state.step += 1
    m_hat, v_hat = state._scratch
    state.m *= state.beta1
    np.multiply(grads, 1.0 - state.beta1, out=m_hat)
    state.m += m_hat
    state.v *= state.beta2
    np.multiply(grads, grads, out=v_hat)
    v_hat *= 1.0 - state.beta2
    state.v += v_hat
    np.multiply(state.m, 1.0 / (1.0 - state.beta1**state.step), out=m_hat)
    np.multiply(state.v, 1.0 / (1.0 - state.beta2**state.step), out=v_hat)
    np.sqrt(v_hat, out=v_hat)
    v_hat += state.eps
    m_hat /= v_hat
    m_hat *= state.lr
    params -= m_hat


def adam_apply(state: AdamState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """One Adam step; returns the updated flat parameter vector."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != (state.size,) or grads.shape != (state.size,):
        raise ValueError(
            f"shapes params {params.shape} / grads {grads.shape} != ({state.size},)"
        )
    out = params.copy()
    _adam_update_inplace(state, out, grads)
    return out


class MlpAdam:
    """Adam bound to one Mlp; steps directly on the net's flat parameters."""

    def __init__(self, net: Mlp, lr: float = 3e-4):
        self.net = net
        self.state = AdamState(size=net.param_count, lr=lr)

    def step(self, grads: Grads) -> None:
        # NaN params would already have surfaced as a NaN loss upstream
        _adam_update_inplace(self.state, self.net._flat, grads.flat(), check_nan=False)

    def reset(self) -> None:
        self.state.reset()
