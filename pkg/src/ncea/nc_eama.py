"""Multiuser energy autoencoders sharing one set of sub-carriers.

Uplink: J single-antenna users, each with its own encoder, superpose at an
L-antenna access point whose decoder is a shared tanh trunk with one softmax
head per user. Downlink: the access point sums J encoder outputs into one
transmit vector and every user decodes its own energy with its own network.
Both are trained end to end on :func:`ncea.nn.fairness_loss`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import (
    STREAM_VALID,
    SnrSpec,
    apply_downlink,
    apply_uplink,
    combine_energy,
    complex_normal,
    energy_sensitivity,
    snr_to_powers,
    stream,
)
from .nc_ea import _encode, _encode_backward, encode_batch, new_decoder, new_encoder, one_hot
from .nn import DenseLayer, DenseNetwork, backward, build_network, fairness_loss, forward, mse_loss
from .training import TrainConfig, fit, split_messages

log = logging.getLogger(__name__)

LAMBDA_GRID = (0.0, 1.0, 5.0, 10.0, 20.0)


def default_widths(direction: str, n_users: int, n_sub: int, n_msg: int) -> tuple[int, int]:
    """Hidden widths (Q1, Q2) used for each experiment family."""
    if direction == "uplink":
        if (n_users, n_sub, n_msg) == (2, 4, 2):
            return (8, 16)
        return (16, 32)
    if direction == "downlink":
        if (n_users, n_sub, n_msg) == (2, 4, 2) or (n_users == n_sub and n_msg == 2):
            return (4, 8)
        return (8, 16)
    raise ValueError(f"direction must be 'uplink' or 'downlink', got {direction!r}")


class _MultiUser:
    """Shared bits of both directions: frozen codebooks and Monte Carlo."""

    encoders: list[DenseLayer]
    es: float
    energy_mode: str

    @property
    def n_users(self) -> int:
        return len(self.encoders)

    @property
    def n_sub(self) -> int:
        return self.encoders[0].out_dim

    @property
    def n_msg(self) -> int:
        return self.encoders[0].in_dim

    @property
    def bits(self) -> int:
        return int(np.log2(self.n_msg))

    def codebooks(self, es: float | None = None) -> np.ndarray:
        """(J, M, N) per-user codewords, each normalised over its full message set."""
        books = np.stack([encode_batch(e, np.arange(self.n_msg), self.es) for e in self.encoders])
        return books if es is None else books * np.sqrt(es / self.es)

    def _decoder_input(self, z, n_ant):
        return z / n_ant if self.energy_mode == "average" else z

    def simulate_chunk(self, ebn0_db, n_ant, size, rng, fading=True, noise=True) -> np.ndarray:
        es, n0 = snr_to_powers(SnrSpec(ebn0_db, self.bits, self.n_sub))
        msgs = rng.integers(0, self.n_msg, (size, self.n_users))
        probs = self._receive(self.codebooks(es), msgs, n0, n_ant, size, rng, fading, noise)
        return np.array([np.count_nonzero(np.argmax(p, axis=1) != msgs[:, j]) for j, p in enumerate(probs)])


@dataclass
class UplinkSystem(_MultiUser):
    encoders: list[DenseLayer]
    trunk: DenseNetwork
    heads: list[DenseNetwork]
    es: float = 1.0
    ebn0_db: float = 0.0
    n_ant_train: int = 1
    energy_mode: str = "sum"
    lam: float = 0.0
    loss_trace: list[float] = field(default_factory=list)
    val_loss: float = float("nan")
    val_bler: list[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.heads) != len(self.encoders):
            raise ValueError("need one decoder head per user")
        if self.trunk.in_dim != self.n_sub or any(h.in_dim != self.trunk.out_dim for h in self.heads):
            raise ValueError("decoder trunk/head dimensions do not chain")

    def decode(self, z) -> list[np.ndarray]:
        v, _ = forward(self.trunk, z)
        return [forward(h, v)[0] for h in self.heads]

    def _receive(self, books, msgs, n0, n_ant, size, rng, fading, noise):
        xs = books[np.arange(self.n_users), msgs]  # (T, J, N)
        hs = complex_normal((size, self.n_users, self.n_sub, n_ant), 1.0, rng) if fading else (
            np.ones((size, self.n_users, self.n_sub, n_ant), np.complex128))
        n = complex_normal((size, self.n_sub, n_ant), n0, rng) if noise else (
            np.zeros((size, self.n_sub, n_ant), np.complex128))
        z = combine_energy(apply_uplink(xs, hs, n))
        return self.decode(self._decoder_input(z, n_ant))


@dataclass
class DownlinkSystem(_MultiUser):
    encoders: list[DenseLayer]
    decoders: list[DenseNetwork]
    es: float = 1.0
    ebn0_db: float = 0.0
    n_ant_train: int = 1
    energy_mode: str = "sum"
    lam: float = 0.0
    loss_trace: list[float] = field(default_factory=list)
    val_loss: float = float("nan")
    val_bler: list[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.decoders) != len(self.encoders):
            raise ValueError("need one decoder per user")
        if any(d.in_dim != self.n_sub for d in self.decoders):
            raise ValueError("decoder input width must equal the sub-carrier count")

    def decode(self, z) -> list[np.ndarray]:
        """``z`` is (T, J, N): user j decodes its own energies ``z[:, j]``."""
        return [forward(d, z[:, j])[0] for j, d in enumerate(self.decoders)]

    def _receive(self, books, msgs, n0, n_ant, size, rng, fading, noise):
        x = books[np.arange(self.n_users), msgs].sum(axis=1)  # (T, N)
        shape = (size, self.n_users, self.n_sub, n_ant)
        hs = complex_normal(shape, 1.0, rng) if fading else np.ones(shape, np.complex128)
        ns = complex_normal(shape, n0, rng) if noise else np.zeros(shape, np.complex128)
        z = combine_energy(apply_downlink(x, hs, ns))
        return self.decode(self._decoder_input(z, n_ant))


def _batch_encode(encoders, msgs, es):
    s = [one_hot(msgs[:, j], enc.in_dim) for j, enc in enumerate(encoders)]
    enc = [_encode(e, sj, es) for e, sj in zip(encoders, s)]
    return s, enc


def uplink_forward(system: UplinkSystem, messages, h, n, batch_norm: bool = True) -> list[np.ndarray]:
    """Per-user confidence vectors for (T, J) message indices over given channels.

    ``h`` is (T, J, N, L), ``n`` is (T, N, L). With ``batch_norm`` every user's
    batch is normalised on its own; otherwise the frozen codebooks are used.
    """
    msgs = np.asarray(messages)
    if msgs.ndim != 2 or msgs.shape[1] != system.n_users:
        raise ValueError(f"messages must be (T, {system.n_users})")
    if batch_norm:
        xs = np.stack([x for x, _, _ in _batch_encode(system.encoders, msgs, system.es)[1]], axis=1)
    else:
        xs = system.codebooks()[np.arange(system.n_users), msgs]
    z = combine_energy(apply_uplink(xs, h, n))
    return system.decode(system._decoder_input(z, h.shape[-1]))


def downlink_forward(system: DownlinkSystem, messages, hs, ns, batch_norm: bool = True) -> list[np.ndarray]:
    """Per-user confidence vectors; ``hs`` and ``ns`` are (T, J, N, L)."""
    msgs = np.asarray(messages)
    if msgs.ndim != 2 or msgs.shape[1] != system.n_users:
        raise ValueError(f"messages must be (T, {system.n_users})")
    if batch_norm:
        x = sum(x for x, _, _ in _batch_encode(system.encoders, msgs, system.es)[1])
    else:
        x = system.codebooks()[np.arange(system.n_users), msgs].sum(axis=1)
    z = combine_energy(apply_downlink(x, hs, ns))
    return system.decode(system._decoder_input(z, hs.shape[-1]))


def _loss(kind, lam, targets, probs):
    if kind == "sum-mse":
        parts = [mse_loss(s, p) for s, p in zip(targets, probs)]
        return sum(l for l, _ in parts), [g for _, g in parts]
    return fairness_loss(targets, probs, lam)


def uplink_loss_and_grads(sys, msgs, h, noise, lam, loss_kind="fairness", in_scale=1.0, average=False):
    """Batch loss and gradients (aligned with the training parameter order) for given channel draws.

    The decoder sees ``combine_energy(y) * in_scale``; every encoder normalises
    its own batch.
    """
    n_ant = h.shape[-1]
    s, enc = _batch_encode(sys.encoders, msgs, sys.es)
    xs = np.stack([x for x, _, _ in enc], axis=1)
    y = apply_uplink(xs, h, noise)
    v, tcache = forward(sys.trunk, combine_energy(y, average) * in_scale)
    outs = [forward(head, v) for head in sys.heads]
    loss, gs = _loss(loss_kind, lam, s, [p for p, _ in outs])
    head_grads, gv = [], None
    for head, (_, cache), g in zip(sys.heads, outs, gs):
        hg, dv = backward(head, cache, g)
        head_grads += hg
        gv = dv if gv is None else gv + dv
    trunk_grads, gz = backward(sys.trunk, tcache, gv)
    gz = gz * (in_scale / n_ant if average else in_scale)
    enc_grads = []
    for j, (e, (_, u, scale)) in enumerate(zip(sys.encoders, enc)):
        enc_grads += _encode_backward(e, s[j], u, scale, gz * energy_sensitivity(h[:, j], y))
    return loss, enc_grads + trunk_grads + head_grads


def downlink_loss_and_grads(sys, msgs, h, noise, lam, loss_kind="fairness", in_scale=1.0, average=False):
    """Downlink counterpart of :func:`uplink_loss_and_grads`; ``noise`` is (T, J, N, L)."""
    n_ant = h.shape[-1]
    s, enc = _batch_encode(sys.encoders, msgs, sys.es)
    x = sum(x for x, _, _ in enc)
    y = apply_downlink(x, h, noise)
    z = combine_energy(y, average) * in_scale
    outs = [forward(d, z[:, j]) for j, d in enumerate(sys.decoders)]
    loss, gs = _loss(loss_kind, lam, s, [p for p, _ in outs])
    dz_scale = in_scale / n_ant if average else in_scale
    dec_grads, gx = [], 0.0
    sens = energy_sensitivity(h, y)  # (T, J, N)
    for j, (d, (_, cache), g) in enumerate(zip(sys.decoders, outs, gs)):
        dg, gz = backward(d, cache, g)
        dec_grads += dg
        gx = gx + gz * dz_scale * sens[:, j]
    enc_grads = []
    for e, sj, (_, u, scale) in zip(sys.encoders, s, enc):
        enc_grads += _encode_backward(e, sj, u, scale, gx)
    return loss, enc_grads + dec_grads


def system_params(sys) -> list[np.ndarray]:
    """Live parameter arrays: encoders, then trunk and heads (uplink) or decoders (downlink)."""
    out = []
    for e in sys.encoders:
        out += [e.weights, e.bias]
    nets = [sys.trunk, *sys.heads] if isinstance(sys, UplinkSystem) else sys.decoders
    for net in nets:
        out += net.params()
    return out


def _train_one(direction, n_users, n_sub, n_msg, n_ant, ebn0_db, cfg, seed, widths, lam, loss_kind):
    bits = int(np.log2(n_msg))
    if 2**bits != n_msg:
        raise ValueError("n_msg must be a power of two")
    es, n0 = snr_to_powers(SnrSpec(ebn0_db, bits, n_sub))
    average = n_ant > cfg.max_train_ant
    L = min(n_ant, cfg.max_train_ant)
    in_scale = 1.0 / ((n_users * es + n0) * (1 if average else L))
    J, uplink = n_users, direction == "uplink"

    def init(rng):
        encoders = [new_encoder(n_sub, n_msg, rng) for _ in range(J)]
        if uplink:
            trunk = build_network([n_sub, *widths], ["tanh"] * len(widths), rng)
            heads = [build_network([widths[-1], n_msg], ["softmax"], rng) for _ in range(J)]
            return UplinkSystem(encoders, trunk, heads, es, ebn0_db, L, "average" if average else "sum", lam)
        decoders = [new_decoder(n_sub, n_msg, widths, rng) for _ in range(J)]
        return DownlinkSystem(encoders, decoders, es, ebn0_db, L, "average" if average else "sum", lam)

    def step(sys, msgs, rng):
        T = len(msgs)
        msgs = msgs.reshape(T, J)
        h = complex_normal((T, J, n_sub, L), 1.0, rng)
        noise = complex_normal((T, n_sub, L) if uplink else (T, J, n_sub, L), n0, rng)
        grads_fn = uplink_loss_and_grads if uplink else downlink_loss_and_grads
        return grads_fn(sys, msgs, h, noise, lam, loss_kind, in_scale, average)

    train_msgs, val_msgs = split_messages(cfg, n_msg, J, seed)
    val_msgs = val_msgs.reshape(len(val_msgs), J)  # J = 1 draws a flat vector
    vrng = stream(seed, STREAM_VALID, 1)
    nv = len(val_msgs)
    vh = complex_normal((nv, J, n_sub, L), 1.0, vrng)
    vn = complex_normal((nv, n_sub, L) if uplink else (nv, J, n_sub, L), n0, vrng)
    vs = [one_hot(val_msgs[:, j], n_msg) for j in range(J)]

    def validate(sys):
        books = sys.codebooks()
        if uplink:
            xs = books[np.arange(J), val_msgs]
            probs = sys.decode(combine_energy(apply_uplink(xs, vh, vn), average) * in_scale)
        else:
            x = books[np.arange(J), val_msgs].sum(axis=1)
            probs = sys.decode(combine_energy(apply_downlink(x, vh, vn), average) * in_scale)
        loss, _ = _loss(loss_kind, lam, vs, probs)
        return loss, np.array([np.mean(np.argmax(p, axis=1) != val_msgs[:, j]) for j, p in enumerate(probs)])

    result = fit(init, step, validate, system_params, train_msgs, cfg, seed)
    sys = result.system
    if uplink:
        sys.trunk.layers[0].weights *= in_scale
    else:
        for d in sys.decoders:
            d.layers[0].weights *= in_scale
    sys.loss_trace, sys.val_loss, sys.val_bler = result.loss_trace, result.val_loss, list(result.val_bler)
    return sys


def train_eama(
    direction: str,
    n_users: int,
    n_sub: int,
    n_msg: int,
    n_ant: int,
    ebn0_db: float,
    cfg: TrainConfig | None = None,
    seed: int = 0,
    widths: Sequence[int] | None = None,
    lam: float | str = "grid",
    loss: str = "fairness",
):
    """Train an uplink or downlink system at one SNR.

    ``lam="grid"`` trains one system per value in :data:`LAMBDA_GRID` and keeps
    the one whose worst user has the lowest validation BLER (mean BLER, then
    the smaller lambda, break ties). ``loss="sum-mse"`` swaps in the plain sum of per-user MSEs.
    """
    cfg = cfg or TrainConfig(restarts=1)
    if direction not in ("uplink", "downlink"):
        raise ValueError(f"direction must be 'uplink' or 'downlink', got {direction!r}")
    if loss not in ("fairness", "sum-mse"):
        raise ValueError(f"unknown loss {loss!r}")
    widths = tuple(widths or default_widths(direction, n_users, n_sub, n_msg))
    grid = LAMBDA_GRID if lam == "grid" else (float(lam),)
    best, best_key = None, None
    for value in grid:
        sys = _train_one(direction, n_users, n_sub, n_msg, n_ant, ebn0_db, cfg, seed, widths, value, loss)
        key = (max(sys.val_bler), float(np.mean(sys.val_bler)), value)
        log.info("%s lam=%g: val BLER %s loss %.5f", direction, value, np.round(sys.val_bler, 5), sys.val_loss)
        if best_key is None or key < best_key:
            best, best_key = sys, key
    return best
