"""Independent scalar-loop oracles shared by the tests."""

import math

import numpy as np


def loop_ml_metric(word, z, n0, n_ant):
    total = 0.0
    for x_a, z_a in zip(word, z):
        e = abs(x_a) ** 2 + n0
        total += z_a / e + n_ant * math.log(e)
    return total


def loop_ml_index(book, z, n0, n_ant):
    """Exhaustive search; strict ``<`` keeps the lowest index on ties."""
    best, best_metric = 0, math.inf
    for i, word in enumerate(book):
        m = loop_ml_metric(word, z, n0, n_ant)
        if m < best_metric:
            best, best_metric = i, m
    return best


def loop_pam_symbols(amplitudes, z, n0, n_ant):
    return [loop_ml_index([[a] for a in amplitudes], [z_a], n0, n_ant) for z_a in z]


def loop_dnn_probs(net, z):
    a = [float(v) for v in z]
    for layer in net.layers:
        out = []
        for i in range(layer.out_dim):
            s = float(layer.bias[i])
            for j in range(layer.in_dim):
                s += float(layer.weights[i, j]) * a[j]
            out.append(s)
        if layer.activation == "tanh":
            out = [math.tanh(v) for v in out]
        elif layer.activation == "softmax":
            top = max(out)
            e = [math.exp(v - top) for v in out]
            out = [v / sum(e) for v in e]
        a = out
    return np.array(a)
