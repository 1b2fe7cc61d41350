"""Per-message decode latency of the DNN and noncoherent ML detectors.

Decoders are compiled with numba so the measurement reflects arithmetic
rather than interpreter overhead. Each repetition decodes a batch of
received grids (energy combining included) and the per-message time is the
batch time divided by the batch size.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .baselines import build_im_codebook, pam_energies
from .channel import complex_normal, stream
from .nc_ea import hidden_width, new_decoder

LATENCY_HEADER = ["scheme", "N", "M", "K", "D", "L", "Q", "ops", "reps", "batch", "median_us", "p95_us"]


@numba.njit(cache=False, fastmath=True)
def _energy(yr, yi, z):
    n_sub, n_ant = yr.shape
    for a in range(n_sub):
        acc = 0.0
        for l in range(n_ant):
            acc += yr[a, l] * yr[a, l] + yi[a, l] * yi[a, l]
        z[a] = acc


@numba.njit(cache=False, fastmath=True)
def dnn_decode_batch(yr, yi, w1, b1, w2, b2, out):
    # softmax is monotone, so the decision is the argmax of the output logits
    n_hidden, n_sub = w1.shape
    n_msg = w2.shape[0]
    z = np.empty(n_sub)
    v = np.empty(n_hidden)
    for t in range(yr.shape[0]):
        _energy(yr[t], yi[t], z)
        for q in range(n_hidden):
            acc = b1[q]
            for a in range(n_sub):
                acc += w1[q, a] * z[a]
            v[q] = acc
        for q in range(n_hidden):
            v[q] = 1.0 - 2.0 / (math.exp(2.0 * v[q]) + 1.0)  # tanh, in a form that vectorises
        best, top = 0, -np.inf
        for i in range(n_msg):
            acc = b2[i]
            for q in range(n_hidden):
                acc += w2[i, q] * v[q]
            if acc > top:
                best, top = i, acc
        out[t] = best


@numba.njit(cache=False, fastmath=True)
def ml_decode_batch(yr, yi, energies, n0, out):
    # the metric is evaluated as written: one division and one log per codeword entry
    n_msg, n_sub = energies.shape
    n_ant = yr.shape[2]
    z = np.empty(n_sub)
    for t in range(yr.shape[0]):
        _energy(yr[t], yi[t], z)
        best, best_metric = 0, np.inf
        for i in range(n_msg):
            acc = 0.0
            for a in range(n_sub):
                e = energies[i, a] + n0
                acc += z[a] / e + n_ant * math.log(e)
            if acc < best_metric:
                best, best_metric = i, acc
        out[t] = best


@numba.njit(cache=False, fastmath=True)
def pam_decode_batch(yr, yi, energies, n0, out):
    order = energies.shape[0]
    n_sub, n_ant = yr.shape[1], yr.shape[2]
    z = np.empty(n_sub)
    for t in range(yr.shape[0]):
        _energy(yr[t], yi[t], z)
        index = 0
        for a in range(n_sub):
            best, best_metric = 0, np.inf
            for d in range(order):
                e = energies[d] + n0
                acc = z[a] / e + n_ant * math.log(e)
                if acc < best_metric:
                    best, best_metric = d, acc
            index = index * order + best
        out[t] = index


@dataclass(frozen=True)
class BenchCase:
    """One decoder configuration; ``scheme`` is ``dnn``, ``ml``, ``im`` or ``pam``."""

    scheme: str
    n_sub: int
    n_msg: int = 0
    n_ant: int = 1
    hidden: int | None = None
    k: int | None = None
    order: int | None = None

    @property
    def ops(self) -> int:
        """Dominant multiply count: NQ + QM for the DNN, NM for ML, ND for per-carrier PAM."""
        if self.scheme == "dnn":
            q = self.hidden or hidden_width(self.n_msg)
            return self.n_sub * q + q * self.n_msg
        if self.scheme == "pam":
            return self.n_sub * self.order
        return self.n_sub * self.n_msg


@dataclass(frozen=True)
class LatencyRow:
    case: BenchCase
    reps: int
    batch: int
    median_us: float
    p95_us: float


def _kernel(case: BenchCase, rng):
    if case.scheme == "dnn":
        q = case.hidden or hidden_width(case.n_msg)
        dec = new_decoder(case.n_sub, case.n_msg, [q], rng)
        w1, b1 = dec.layers[0].weights, dec.layers[0].bias
        w2, b2 = dec.layers[1].weights, dec.layers[1].bias
        return lambda yr, yi, out: dnn_decode_batch(yr, yi, w1, b1, w2, b2, out)
    if case.scheme == "ml":
        energies = rng.uniform(0.0, 2.0, (case.n_msg, case.n_sub))
        return lambda yr, yi, out: ml_decode_batch(yr, yi, energies, 1.0, out)
    if case.scheme == "im":
        energies = build_im_codebook(case.n_sub, case.k).codewords() ** 2
        return lambda yr, yi, out: ml_decode_batch(yr, yi, energies, 1.0, out)
    if case.scheme == "pam":
        energies = pam_energies(case.order, 1.0)
        return lambda yr, yi, out: pam_decode_batch(yr, yi, energies, 1.0, out)
    raise ValueError(f"unknown bench scheme {case.scheme!r}")


def benchmark_decode(cases, repetitions: int = 1000, batch: int = 64, seed: int = 0) -> list[LatencyRow]:
    """Median and 95th-percentile per-message decode time for each case."""
    if repetitions < 1 or batch < 1:
        raise ValueError("repetitions and batch must be >= 1")
    rows = []
    for idx, case in enumerate(cases):
        rng = stream(seed, 9, idx)
        kernel = _kernel(case, rng)
        y = complex_normal((batch, case.n_sub, case.n_ant), 1.0, rng)
        yr, yi = np.ascontiguousarray(y.real), np.ascontiguousarray(y.imag)
        out = np.empty(batch, np.int64)
        kernel(yr, yi, out)  # compile and warm caches
        samples = np.empty(repetitions)
        for r in range(repetitions):
            t0 = time.perf_counter_ns()
            kernel(yr, yi, out)
            samples[r] = (time.perf_counter_ns() - t0) / batch / 1e3
        rows.append(LatencyRow(case, repetitions, batch, float(np.median(samples)), float(np.percentile(samples, 95))))
    return rows


def affine_fit(x, y) -> tuple[float, float, float]:
    """Least-squares ``y = a + b x``; returns ``(a, b, r_squared)``."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    b, a = np.polyfit(x, y, 1)
    resid = y - (a + b * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return float(a), float(b), 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0


def write_latency_csv(rows: list[LatencyRow], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LATENCY_HEADER)
        for row in rows:
            c = row.case
            q = (c.hidden or hidden_width(c.n_msg)) if c.scheme == "dnn" else ""
            w.writerow([c.scheme, c.n_sub, c.n_msg or "", c.k or "", c.order or "", c.n_ant, q, c.ops,
                        row.reps, row.batch, f"{row.median_us:.6g}", f"{row.p95_us:.6g}"])
    return path


def default_cases() -> list[BenchCase]:
    """Small and large decoders of each kind plus an antenna sweep at (8, 8)."""
    cases = [
        BenchCase("dnn", 4, 4, 1), BenchCase("ml", 4, 4, 1), BenchCase("im", 4, 4, 1, k=1),
        BenchCase("dnn", 8, 8, 1), BenchCase("ml", 8, 8, 1), BenchCase("im", 8, 8, 1, k=1),
        BenchCase("pam", 2, 4, 1, order=2), BenchCase("pam", 1, 4, 1, order=4),
        BenchCase("dnn", 16, 64, 1, hidden=128), BenchCase("ml", 16, 64, 1),
    ]
    cases += [BenchCase("dnn", 8, 8, L) for L in (2, 4, 8, 16)] + [BenchCase("ml", 8, 8, L) for L in (2, 4, 8, 16)]
    return cases
