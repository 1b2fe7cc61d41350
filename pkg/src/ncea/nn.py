"""Dense feed-forward networks with hand-written backpropagation.

Everything the energy autoencoders need and nothing more: tanh / softmax /
linear layers, MSE and user-fairness losses, Adam, Xavier initialisation and a
central finite-difference gradient checker. All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

ACTIVATIONS = ("tanh", "softmax", "linear")


class ShapeError(ValueError):
    """Raised when array dimensions do not chain."""


class DivergenceError(FloatingPointError):
    """Raised when training produces non-finite losses or gradients."""


@dataclass
class DenseLayer:
    """Fully-connected layer ``act(W @ x + b)`` with ``W`` of shape (out, in)."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "tanh"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weights.ndim != 2:
            raise ShapeError(f"weights must be 2-D, got shape {self.weights.shape}")
        if self.bias.shape[0] != self.weights.shape[0]:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} != weight rows {self.weights.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("layer parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.bias.copy(), self.activation)


@dataclass
class DenseNetwork:
    layers: list[DenseLayer]

    def __post_init__(self):
        self.layers = list(self.layers)
        if not self.layers:
            raise ShapeError("a network needs at least one layer")
        for k, (a, b) in enumerate(zip(self.layers, self.layers[1:])):
            if a.out_dim != b.in_dim:
                raise ShapeError(f"layer {k} outputs {a.out_dim} but layer {k + 1} expects {b.in_dim}")
        for layer in self.layers[:-1]:
            if layer.activation == "softmax":
                raise ShapeError("softmax is only allowed on the final layer")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def widths(self) -> list[int]:
        return [self.in_dim] + [layer.out_dim for layer in self.layers]

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in ``[W0, b0, W1, b1, ...]`` order (live references)."""
        out = []
        for layer in self.layers:
            out += [layer.weights, layer.bias]
        return out

    def copy(self) -> "DenseNetwork":
        return DenseNetwork([layer.copy() for layer in self.layers])


def xavier_init(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform Glorot initialisation on ``[-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))]``."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def build_network(widths: Sequence[int], activations: Sequence[str], rng: np.random.Generator) -> DenseNetwork:
    """Xavier-initialised network; ``widths`` includes the input dimension."""
    if len(widths) != len(activations) + 1:
        raise ShapeError("need one activation per layer")
    layers = [
        DenseLayer(xavier_init(n_out, n_in, rng), np.zeros(n_out), act)
        for n_in, n_out, act in zip(widths[:-1], widths[1:], activations)
    ]
    return DenseNetwork(layers)


def softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _activate(pre: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        return np.tanh(pre)
    if activation == "softmax":
        return softmax(pre)
    return pre


@dataclass
class ForwardCache:
    """Per-layer inputs and outputs recorded by :func:`forward`."""

    net: DenseNetwork
    inputs: list[np.ndarray] = field(default_factory=list)
    outputs: list[np.ndarray] = field(default_factory=list)


def forward(net: DenseNetwork, batch: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Run a (T, in) batch through ``net``; returns the (T, out) output and a cache."""
    a = batch if isinstance(batch, np.ndarray) and batch.dtype == np.float64 else np.asarray(batch, np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != net.in_dim:
        raise ShapeError(f"input has shape {np.shape(batch)}, network expects (T, {net.in_dim})")
    cache = ForwardCache(net)
    for layer in net.layers:
        cache.inputs.append(a)
        a = _activate(a @ layer.weights.T + layer.bias, layer.activation)
        cache.outputs.append(a)
    return a, cache


def backward(
    net: DenseNetwork, cache: ForwardCache | None, grad_out: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Backpropagate ``dLoss/dOutput`` through ``net``.

    Softmax layers use the full Jacobian-vector product, so any loss on the
    probabilities (MSE here) is handled exactly.

    Returns:
        Gradients aligned with ``net.params()`` and the gradient w.r.t. the
        network input.
    """
    if cache is None or cache.net is not net or len(cache.inputs) != len(net.layers):
        raise ValueError("missing or stale forward cache for this network")
    g = grad_out
    if g.shape != cache.outputs[-1].shape:
        raise ShapeError(f"gradient shape {g.shape} != output shape {cache.outputs[-1].shape}")
    grads: list[np.ndarray] = [None] * (2 * len(net.layers))  # type: ignore[list-item]
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        out = cache.outputs[k]
        if layer.weights.shape[1] != cache.inputs[k].shape[1]:
            raise ValueError("forward cache does not match current layer shapes")
        if layer.activation == "tanh":
            g = g * (1.0 - out * out)
        elif layer.activation == "softmax":
            g = out * (g - (g * out).sum(axis=1, keepdims=True))
        grads[2 * k] = g.T @ cache.inputs[k]
        grads[2 * k + 1] = g.sum(axis=0)
        g = g @ layer.weights
    return grads, g


def mse_loss(targets: np.ndarray, predictions: np.ndarray) -> tuple[float, np.ndarray]:
    """``(1/T) * sum_i ||s_i - s_hat_i||^2`` and its gradient w.r.t. the predictions."""
    if np.shape(targets) != np.shape(predictions):
        raise ShapeError(f"targets {np.shape(targets)} vs predictions {np.shape(predictions)}")
    diff = predictions - targets
    t = diff.shape[0]
    return float((diff * diff).sum() / t), (2.0 / t) * diff


def fairness_loss(
    targets: Sequence[np.ndarray], predictions: Sequence[np.ndarray], lam: float
) -> tuple[float, list[np.ndarray]]:
    """Sum of per-user squared errors plus ``lam`` times their spread.

    Per sample the loss is ``sum_j E_j + lam * sum_j (E_j - mean(E))^2`` with
    ``E_j = ||s_j - s_hat_j||^2``; the batch loss is the sample mean.
    """
    if len(targets) == 0 or len(targets) != len(predictions):
        raise ValueError("need the same, nonzero number of user target and prediction blocks")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    diffs = []
    for s, p in zip(targets, predictions):
        if np.shape(s) != np.shape(p):
            raise ShapeError(f"targets {np.shape(s)} vs predictions {np.shape(p)}")
        diffs.append(p - s)
    t = diffs[0].shape[0]
    errs = np.stack([(d * d).sum(axis=1) for d in diffs])  # (J, T)
    dev = errs - errs.sum(axis=0) / len(diffs)
    loss = float((errs.sum() + lam * (dev * dev).sum()) / t)
    # d/dE_j of the spread term is 2*lam*dev_j because the deviations sum to zero
    weights = 1.0 + 2.0 * lam * dev
    grads = [(2.0 * weights[j] / t)[:, None] * d for j, d in enumerate(diffs)]
    return loss, grads


@dataclass
class AdamState:
    """Adam moments; ``m`` and ``v`` are per-parameter views into flat buffers."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    _m_flat: np.ndarray | None = field(default=None, repr=False)
    _v_flat: np.ndarray | None = field(default=None, repr=False)


def adam_init(params: Sequence[np.ndarray], lr: float = 1e-3) -> AdamState:
    size = sum(p.size for p in params)
    m_flat, v_flat = np.zeros(size), np.zeros(size)
    m, v, offset = [], [], 0
    for p in params:
        m.append(m_flat[offset : offset + p.size].reshape(p.shape))
        v.append(v_flat[offset : offset + p.size].reshape(p.shape))
        offset += p.size
    return AdamState(m, v, lr=lr, _m_flat=m_flat, _v_flat=v_flat)


def adam_step(
    params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState
) -> tuple[Sequence[np.ndarray], AdamState]:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("params, grads and optimizer state must align")
    for p, g, m in zip(params, grads, state.m):
        if g.shape != p.shape or m.shape != p.shape:
            raise ShapeError("optimizer state does not mirror parameter shapes")
    g = np.concatenate([np.ravel(g) for g in grads])
    if not np.isfinite(g).all():
        raise DivergenceError("non-finite gradient; training diverged, restart with a new seed")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    m, v = state._m_flat, state._v_flat
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    mhat = m / (1.0 - b1**state.t)
    vhat = v / (1.0 - b2**state.t)
    update = state.lr * mhat / (np.sqrt(vhat) + state.eps)
    offset = 0
    for p in params:
        p -= update[offset : offset + p.size].reshape(p.shape)
        offset += p.size
    return params, state


def numerical_gradient(
    loss_fn: Callable[[], float], params: Sequence[np.ndarray], step: float = 1e-5, stencil: int = 2
) -> list[np.ndarray]:
    """Central finite differences of ``loss_fn`` w.r.t. every entry of ``params``.

    ``loss_fn`` takes no arguments and must read the (mutated in place) params.
    ``stencil=4`` uses the fourth-order five-point formula, whose smaller
    truncation error allows a larger step and so less round-off on entries
    that are tiny compared with the loss.
    """
    if stencil not in (2, 4):
        raise ValueError("stencil must be 2 or 4")
    out = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            up = loss_fn()
            flat[i] = old - step
            down = loss_fn()
            if stencil == 4:
                flat[i] = old + 2 * step
                up2 = loss_fn()
                flat[i] = old - 2 * step
                down2 = loss_fn()
                gflat[i] = (8.0 * (up - down) - (up2 - down2)) / (12.0 * step)
            else:
                gflat[i] = (up - down) / (2.0 * step)
            flat[i] = old
        out.append(g)
    return out


def max_relative_error(
    analytic: Sequence[np.ndarray], numeric: Sequence[np.ndarray], floor: float = 1e-7
) -> float:
    """Largest entrywise ``|a - n| / max(|a|, |n|, floor)`` over all arrays."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
