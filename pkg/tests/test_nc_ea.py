import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncea.channel import STREAM_INIT, stream
from ncea.montecarlo import SingleUserScheme, evaluate_bler
from ncea.nc_ea import (
    Codebook,
    TrainedModel,
    _encode,
    decode_dnn,
    decode_ml,
    encode_batch,
    extract_codebook,
    fixed_power_normalize,
    hidden_width,
    ml_metrics,
    new_decoder,
    new_encoder,
    one_hot,
    train_nc_ea,
)
from ncea.nn import DenseLayer
from ncea.training import TrainConfig

from .oracles import loop_ml_index, loop_dnn_probs

SMALL = TrainConfig(epochs=3, train_size=2000, restarts=1)


def test_single_sample_batch_is_fixed_power_form():
    rng = np.random.default_rng(0)
    enc = new_encoder(5, 8, rng)
    for m in range(8):
        x = encode_batch(enc, np.array([m]), 3.7)
        u = np.tanh(enc.weights[:, m] + enc.bias)
        np.testing.assert_array_equal(x[0], fixed_power_normalize(u, 5, 3.7))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.sampled_from([2, 4, 8, 16]), st.integers(1, 64),
       st.floats(0.01, 1e4))
def test_batch_energy_identity(seed, n_sub, n_msg, batch, es):
    rng = np.random.default_rng(seed)
    enc = new_encoder(n_sub, n_msg, rng)
    x = encode_batch(enc, rng.integers(0, n_msg, batch), es)
    assert abs(np.sum(x * x) / (n_sub * batch * es) - 1) < 1e-9


def test_hand_normalisation_case():
    # u1 = (1, 0), u2 = (0, 1) come from weights with tanh^-1 folded in; check the formula itself
    u = np.array([[1.0, 0.0], [0.0, 1.0]])
    scale = math.sqrt(2 * 2 * 1.0) / math.sqrt(np.sum(u * u))
    np.testing.assert_allclose(scale * u, math.sqrt(2) * np.eye(2), rtol=1e-15)
    # and through the encoder: one-hot inputs select columns, so tanh(W) = u
    w = np.arctanh(np.array([[0.5, 0.0], [0.0, 0.5]]))
    x = encode_batch(DenseLayer(w, np.zeros(2)), np.array([0, 1]), 1.0)
    np.testing.assert_allclose(x, math.sqrt(2) * np.eye(2), rtol=1e-14)


def test_all_zero_batch_rejected():
    enc = DenseLayer(np.zeros((3, 4)), np.zeros(3))
    with pytest.raises(ValueError):
        encode_batch(enc, np.arange(4), 1.0)


def test_one_hot_and_index_inputs_agree():
    enc = new_encoder(3, 4, np.random.default_rng(1))
    msgs = np.array([0, 3, 3, 1])
    np.testing.assert_array_equal(encode_batch(enc, msgs, 2.0), encode_batch(enc, one_hot(msgs, 4), 2.0))
    with pytest.raises(ValueError):
        encode_batch(enc, np.zeros((2, 5)), 1.0)


def test_extract_codebook_shape_energy_determinism():
    a = extract_codebook(new_encoder(6, 8, stream(3)), 2.5)
    b = extract_codebook(new_encoder(6, 8, stream(3)), 2.5)
    assert a.codewords.shape == (8, 6)
    assert np.sum(a.codewords**2) == pytest.approx(6 * 8 * 2.5, rel=1e-12)
    np.testing.assert_array_equal(a.codewords, b.codewords)
    assert np.isrealobj(a.codewords) and np.all(np.isfinite(a.codewords))


def test_decode_dnn_outputs():
    rng = np.random.default_rng(2)
    dec = new_decoder(4, 8, [32], rng)
    z = rng.exponential(size=(20, 4))
    idx, probs = decode_dnn(dec, z)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    for i in range(20):
        ref = loop_dnn_probs(dec, z[i])
        assert idx[i] == int(np.argmax(ref))
        np.testing.assert_allclose(probs[i], ref, rtol=1e-12)


def test_decode_dnn_zero_energy_uses_biases_only():
    rng = np.random.default_rng(3)
    dec = new_decoder(3, 4, [16], rng)
    dec.layers[0].bias[:] = rng.normal(size=16)
    dec.layers[1].bias[:] = rng.normal(size=4)
    i1, p1 = decode_dnn(dec, np.zeros(3))
    i2, p2 = decode_dnn(dec, np.zeros(3))
    np.testing.assert_array_equal(p1, p2)
    expected = np.tanh(dec.layers[0].bias) @ dec.layers[1].weights.T + dec.layers[1].bias
    assert i1 == np.argmax(expected)


def test_decode_dnn_rejects_negative_energy():
    dec = new_decoder(2, 4, [16], np.random.default_rng(0))
    with pytest.raises(ValueError):
        decode_dnn(dec, np.array([1.0, -0.1]))


def test_decode_ml_hand_case():
    book = np.array([[0.0], [math.sqrt(2)]])
    metrics = ml_metrics(book, np.array([[5.0]]), 1.0, 1)[0]
    assert metrics[0] == pytest.approx(5.0, abs=1e-12)
    assert metrics[1] == pytest.approx(5 / 3 + math.log(3), abs=1e-12)
    assert metrics[1] == pytest.approx(2.765, abs=1e-3)
    assert decode_ml(book, np.array([5.0]), 1.0, 1) == 1


def test_decode_ml_noiseless_mean_energy_is_picked():
    book = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 3.0], [3.0, 3.0]])
    for m, x in enumerate(book):
        z = 4 * (x**2 + 1.0)  # mean combined energy at L = 4, N0 = 1
        assert decode_ml(Codebook(book, 1.0), z, 1.0, 4) == m


def test_decode_ml_duplicate_codewords_lowest_index():
    book = np.array([[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]])
    assert decode_ml(book, np.array([3.0, 1.0]), 1.0, 2) == 0


def test_decode_ml_errors():
    with pytest.raises(ValueError):
        decode_ml(np.zeros((0, 2)), np.ones(2), 1.0, 1)
    with pytest.raises(ValueError):
        decode_ml(np.ones((2, 2)), np.ones(2), 0.0, 1)
    with pytest.raises(ValueError):
        decode_ml(np.ones((2, 2)), np.ones(2), 1.0, 0)


def test_decode_ml_matches_brute_force():
    rng = np.random.default_rng(4)
    for _ in range(500):
        n_sub, n_msg = rng.integers(1, 5), rng.integers(1, 9)
        book = rng.normal(size=(n_msg, n_sub)) * rng.uniform(0.1, 5)
        n0, n_ant = rng.uniform(0.1, 3), int(rng.integers(1, 9))
        z = rng.exponential(size=n_sub) * rng.uniform(0.1, 20)
        assert decode_ml(book, z, n0, n_ant) == loop_ml_index(book, z, n0, n_ant)


def test_hidden_width_table():
    assert [hidden_width(m) for m in (4, 8, 16)] == [16, 32, 64]
    assert hidden_width(32) == 128


def test_training_defaults_and_epoch_zero():
    cfg = TrainConfig(epochs=0, train_size=200, restarts=1)
    model = train_nc_ea(4, 8, 2, 10.0, cfg, seed=11)
    assert model.decoder.widths == [4, 32, 8]
    rng = stream(11, STREAM_INIT, 0)
    enc, dec = new_encoder(4, 8, rng), new_decoder(4, 8, [32], rng)
    np.testing.assert_array_equal(model.encoder.weights, enc.weights)
    np.testing.assert_array_equal(model.decoder.layers[1].weights, dec.layers[1].weights)
    # the fixed input scaling is folded into the first decoder layer
    in_scale = model.decoder.layers[0].weights / dec.layers[0].weights
    np.testing.assert_allclose(in_scale, in_scale.flat[0], rtol=1e-14)
    assert model.loss_trace == []


def test_training_smoke_reduces_loss():
    untrained = train_nc_ea(4, 4, 2, 15.0, TrainConfig(epochs=0, train_size=2000, restarts=1), seed=1)
    model = train_nc_ea(4, 4, 2, 15.0, SMALL, seed=1)
    assert model.val_loss < untrained.val_loss
    assert model.loss_trace[-1] < model.loss_trace[0]
    assert evaluate_bler(model, 15.0, 2, 10_000, seed=3).bler < 0.5


def test_training_is_deterministic():
    a = train_nc_ea(2, 4, 1, 10.0, TrainConfig(epochs=2, train_size=600, restarts=2), seed=5)
    b = train_nc_ea(2, 4, 1, 10.0, TrainConfig(epochs=2, train_size=600, restarts=2), seed=5)
    np.testing.assert_array_equal(a.codebook.codewords, b.codebook.codewords)
    assert a.loss_trace == b.loss_trace


def test_large_l_uses_average_energy():
    model = train_nc_ea(2, 4, 64, 5.0, TrainConfig(epochs=1, train_size=400, restarts=1, max_train_ant=16), seed=0)
    assert model.energy_mode == "average" and model.n_ant_train == 16
    z = np.full((3, 2), 64.0)
    np.testing.assert_array_equal(model.decoder_input(z, 64), z / 64)


class _Guess(SingleUserScheme):
    n_sub, n_msg, bits = 2, 4, 2

    def __init__(self):
        self.rng = np.random.default_rng(0)

    def codewords(self, es):
        return np.ones((4, 2)) * math.sqrt(es)

    def detect(self, z, es, n0, n_ant):
        return self.rng.integers(0, 4, len(z))


def test_random_guess_bler():
    res = evaluate_bler(_Guess(), 10.0, 1, 100_000, seed=0)
    assert abs(res.bler - 0.75) < 0.01


def _model(n_sub=2, n_msg=4, seed=0):
    rng = np.random.default_rng(seed)
    return TrainedModel(new_encoder(n_sub, n_msg, rng), new_decoder(n_sub, n_msg, [16], rng), 1.0, 0.0, 1)


def test_noiseless_ml_has_no_errors():
    model = _model().with_decoder("ml")
    assert len({tuple(np.round(w**2, 12)) for w in model.codebook.codewords}) == 4  # distinct energies
    res = evaluate_bler(model, 10.0, 1, 5000, fading=False, noise=False)
    assert res.errors == 0


def test_evaluation_reproducible():
    model = _model(seed=2).with_decoder("ml")
    a = evaluate_bler(model, 5.0, 2, 30_000, seed=9)
    b = evaluate_bler(model, 5.0, 2, 30_000, seed=9)
    assert a.errors == b.errors
    lo, hi = a.ci
    assert lo <= a.bler <= hi


def test_with_decoder_rejects_unknown():
    with pytest.raises(ValueError):
        _model().with_decoder("viterbi")
