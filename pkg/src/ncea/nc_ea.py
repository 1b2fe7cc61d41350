"""Single-user noncoherent energy autoencoder.

The encoder is one tanh layer followed by batch power normalisation; its
real outputs are sub-carrier amplitudes. The receiver only sees the energy
combined over antennas and decodes it either with a small dense network or
with the exhaustive noncoherent maximum-likelihood rule.
"""

from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import (
    STREAM_VALID,
    SnrSpec,
    combine_energy,
    complex_normal,
    energy_sensitivity,
    snr_to_powers,
    stream,
)
from .montecarlo import SingleUserScheme
from .nn import DenseLayer, DenseNetwork, backward, build_network, forward, mse_loss, xavier_init
from .training import TrainConfig, fit, split_messages

# hidden width of the decoder per message count
HIDDEN_BY_M = {4: 16, 8: 32, 16: 64}


def hidden_width(n_msg: int) -> int:
    return HIDDEN_BY_M.get(n_msg, 4 * n_msg)


@functools.lru_cache(maxsize=None)
def _eye(n: int) -> np.ndarray:
    eye = np.eye(n)
    eye.flags.writeable = False
    return eye


def one_hot(indices, n_msg: int) -> np.ndarray:
    return _eye(n_msg)[indices]


def _as_one_hot(messages, n_msg):
    messages = np.asarray(messages)
    if messages.ndim == 1 and np.issubdtype(messages.dtype, np.integer):
        return one_hot(messages, n_msg)
    if messages.ndim != 2 or messages.shape[1] != n_msg:
        raise ValueError(f"expected (T, {n_msg}) one-hot messages, got {messages.shape}")
    return messages.astype(np.float64)


def new_encoder(n_sub: int, n_msg: int, rng: np.random.Generator) -> DenseLayer:
    return DenseLayer(xavier_init(n_sub, n_msg, rng), np.zeros(n_sub), "tanh")


def new_decoder(n_sub: int, n_msg: int, hidden: Sequence[int], rng: np.random.Generator) -> DenseNetwork:
    widths = [n_sub, *hidden, n_msg]
    return build_network(widths, ["tanh"] * len(hidden) + ["softmax"], rng)


def _encode(encoder: DenseLayer, onehot: np.ndarray, es: float):
    u = np.tanh(onehot @ encoder.weights.T + encoder.bias)
    total = float((u * u).sum())
    if not total > 0.0:
        raise ValueError("encoder outputs are all zero; re-initialise the encoder")
    scale = math.sqrt(encoder.out_dim * u.shape[0] * es) / math.sqrt(total)
    return scale * u, u, scale


def _encode_backward(encoder: DenseLayer, onehot, u, scale, grad_x) -> list[np.ndarray]:
    # x = scale * u with scale ∝ 1/sqrt(sum u^2); the second term is the normaliser's pull
    uu = u * u
    grad_u = scale * (grad_x - ((grad_x * u).sum() / uu.sum()) * u)
    grad_pre = grad_u * (1.0 - uu)
    return [grad_pre.T @ onehot, grad_pre.sum(axis=0)]


def encode_batch(encoder: DenseLayer, messages, es: float) -> np.ndarray:
    """Encode a batch and normalise it so that ``sum_i ||x_i||^2 = N * T * E_s``.

    ``messages`` is either a (T, M) one-hot matrix or a vector of indices.
    """
    onehot = _as_one_hot(messages, encoder.in_dim)
    if onehot.shape[0] < 1:
        raise ValueError("batch must contain at least one message")
    return _encode(encoder, onehot, es)[0]


def fixed_power_normalize(u: np.ndarray, n_sub: int, es: float) -> np.ndarray:
    """Per-sample alternative ``sqrt(N E_s) u / ||u||``."""
    return math.sqrt(n_sub * 1 * es) / math.sqrt(float((u * u).sum())) * u


@dataclass
class Codebook:
    codewords: np.ndarray  # (M, N) real amplitudes
    es: float
    n0: float = 1.0
    ebn0_db: float | None = None

    @property
    def n_msg(self) -> int:
        return self.codewords.shape[0]

    @property
    def n_sub(self) -> int:
        return self.codewords.shape[1]


def extract_codebook(encoder: DenseLayer, es: float, ebn0_db: float | None = None) -> Codebook:
    """All M messages encoded as a single batch, freezing the normaliser."""
    return Codebook(encode_batch(encoder, np.arange(encoder.in_dim), es), es, ebn0_db=ebn0_db)


def _check_energy(z):
    z = np.asarray(z, dtype=np.float64)
    if np.any(z < 0):
        raise ValueError("energies must be nonnegative")
    return z


def decode_dnn(decoder: DenseNetwork, z) -> tuple[np.ndarray, np.ndarray]:
    """Softmax confidences for energy vector(s) ``z`` and the argmax message index."""
    z = _check_energy(z)
    probs, _ = forward(decoder, z)
    idx = np.argmax(probs, axis=1)
    if z.ndim == 1:
        return idx[0], probs[0]
    return idx, probs


def ml_metrics(codewords: np.ndarray, z, n0: float, n_ant: int) -> np.ndarray:
    """Noncoherent ML cost of every codeword, shape (B, M)."""
    e = np.abs(codewords) ** 2 + n0
    return np.sum(z[..., None, :] / e, axis=-1) + n_ant * np.sum(np.log(e), axis=-1)


def decode_ml(codebook, z, n0: float, n_ant: int):
    """Exhaustive noncoherent ML decision over the codebook (ties -> lowest index).

    ``codebook`` is a :class:`Codebook` or an (M, N) array; ``z`` is the summed
    energy vector, (N,) or (B, N).
    """
    words = codebook.codewords if isinstance(codebook, Codebook) else np.asarray(codebook, dtype=np.float64)
    if words.size == 0:
        raise ValueError("empty codebook")
    if not n0 > 0 or n_ant < 1:
        raise ValueError("need n0 > 0 and n_ant >= 1")
    z = _check_energy(z)
    return np.argmin(ml_metrics(words, z, n0, n_ant), axis=-1)


@dataclass
class TrainedModel(SingleUserScheme):
    """A deployed NC-EA: frozen codebook, energy decoder and training metadata.

    ``energy_mode`` is ``"sum"`` or ``"average"``; average-mode decoders take
    energy divided by the antenna count and so transfer across ``L``.
    """

    encoder: DenseLayer
    decoder: DenseNetwork
    es: float
    ebn0_db: float
    n_ant_train: int
    energy_mode: str = "sum"
    decoder_kind: str = "dnn"
    loss_trace: list[float] = field(default_factory=list)
    val_loss: float = float("nan")

    def __post_init__(self):
        if self.decoder.in_dim != self.n_sub or self.decoder.out_dim != self.n_msg:
            raise ValueError("decoder dimensions do not match the encoder")

    @property
    def n_sub(self) -> int:
        return self.encoder.out_dim

    @property
    def n_msg(self) -> int:
        return self.encoder.in_dim

    @property
    def bits(self) -> int:
        return int(np.log2(self.n_msg))

    @property
    def codebook(self) -> Codebook:
        if getattr(self, "_codebook", None) is None:
            self._codebook = extract_codebook(self.encoder, self.es, self.ebn0_db)
        return self._codebook

    def codewords(self, es: float) -> np.ndarray:
        return self.codebook.codewords * np.sqrt(es / self.es)

    def decoder_input(self, z, n_ant: int):
        return z / n_ant if self.energy_mode == "average" else z

    def detect(self, z, es, n0, n_ant):
        if self.decoder_kind == "ml":
            return decode_ml(self.codewords(es), z, n0, n_ant)
        return decode_dnn(self.decoder, self.decoder_input(z, n_ant))[0]

    def with_decoder(self, kind: str) -> "TrainedModel":
        if kind not in ("dnn", "ml"):
            raise ValueError(f"unknown decoder kind {kind!r}")
        return dataclasses.replace(self, decoder_kind=kind)


@dataclass
class _Autoencoder:
    encoder: DenseLayer
    decoder: DenseNetwork


def ae_loss_and_grads(encoder, decoder, msgs, h, noise, es, in_scale=1.0, average=False):
    """MSE and gradients ``[dW_enc, db_enc, *decoder grads]`` for one batch over given draws."""
    n_ant = h.shape[-1]
    s = one_hot(msgs, encoder.in_dim)
    x, u, scale = _encode(encoder, s, es)
    y = h * x[..., None] + noise
    probs, cache = forward(decoder, combine_energy(y, average) * in_scale)
    loss, g = mse_loss(s, probs)
    dec_grads, gz = backward(decoder, cache, g)
    gz = gz * (in_scale / n_ant if average else in_scale)
    enc_grads = _encode_backward(encoder, s, u, scale, gz * energy_sensitivity(h, y))
    return loss, enc_grads + dec_grads


def train_nc_ea(
    n_sub: int,
    n_msg: int,
    n_ant: int,
    ebn0_db: float,
    cfg: TrainConfig | None = None,
    seed: int = 0,
    hidden: int | Sequence[int] | None = None,
) -> TrainedModel:
    """End-to-end training at one SNR with fresh fading and noise every batch.

    When ``n_ant`` exceeds ``cfg.max_train_ant`` the model is trained on the
    average energy with ``cfg.max_train_ant`` antennas instead.
    """
    cfg = cfg or TrainConfig()
    bits = int(np.log2(n_msg))
    if 2**bits != n_msg:
        raise ValueError("n_msg must be a power of two")
    es, n0 = snr_to_powers(SnrSpec(ebn0_db, bits, n_sub))
    average = n_ant > cfg.max_train_ant
    n_ant_tr = min(n_ant, cfg.max_train_ant)
    # fixed input rescaling keeps tanh units unsaturated at high SNR; folded into W1 afterwards
    in_scale = 1.0 / ((es + n0) * (1 if average else n_ant_tr))
    if hidden is None:
        hidden = [hidden_width(n_msg)]
    elif isinstance(hidden, int):
        hidden = [hidden]

    def init(rng):
        return _Autoencoder(new_encoder(n_sub, n_msg, rng), new_decoder(n_sub, n_msg, hidden, rng))

    def params(ae):
        return [ae.encoder.weights, ae.encoder.bias] + ae.decoder.params()

    def step(ae, msgs, rng):
        shape = (len(msgs), n_sub, n_ant_tr)
        h = complex_normal(shape, 1.0, rng)
        return ae_loss_and_grads(ae.encoder, ae.decoder, msgs, h, complex_normal(shape, n0, rng), es, in_scale, average)

    train_msgs, val_msgs = split_messages(cfg, n_msg, 1, seed)
    vrng = stream(seed, STREAM_VALID, 1)
    vshape = (len(val_msgs), n_sub, n_ant_tr)
    vh, vn = complex_normal(vshape, 1.0, vrng), complex_normal(vshape, n0, vrng)
    vs = one_hot(val_msgs, n_msg)

    def validate(ae):
        x = encode_batch(ae.encoder, np.arange(n_msg), es)[val_msgs]
        z = combine_energy(vh * x[..., None] + vn, average)
        probs, _ = forward(ae.decoder, z * in_scale)
        loss, _ = mse_loss(vs, probs)
        return loss, np.array([np.mean(np.argmax(probs, axis=1) != val_msgs)])

    result = fit(init, step, validate, params, train_msgs, cfg, seed)
    ae = result.system
    ae.decoder.layers[0].weights *= in_scale
    return TrainedModel(
        ae.encoder,
        ae.decoder,
        es,
        ebn0_db,
        n_ant_tr,
        "average" if average else "sum",
        loss_trace=result.loss_trace,
        val_loss=result.val_loss,
    )
