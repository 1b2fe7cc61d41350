"""Rayleigh fading, complex Gaussian noise and energy combining.

Array layout convention: sub-carriers then antennas are always the last two
axes, ``(..., N, L)``; multiuser grids put the user axis just before them,
``(..., J, N, L)``. Transmit vectors are real, ``(..., N)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Stream tags keep independent uses of one base seed apart.
STREAM_TRAIN = 1
STREAM_VALID = 2
STREAM_EVAL = 3
STREAM_INIT = 4


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based (Philox) generator for the stream ``(seed, *keys)``.

    Different key tuples give statistically independent streams, so Monte
    Carlo workers can draw in parallel without coordinating.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, keys)])))


def complex_normal(shape: tuple[int, ...], variance: float, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. CN(0, variance): real and imaginary parts each N(0, variance/2)."""
    pairs = rng.standard_normal(tuple(shape) + (2,))
    return pairs.view(np.complex128)[..., 0] * np.sqrt(variance / 2.0)


def _grid_shape(n_sub, n_ant, n_users, batch):
    if n_sub < 1 or n_ant < 1 or (n_users is not None and n_users < 1):
        raise ValueError("N, L and J must be >= 1")
    shape = (n_sub, n_ant)
    if n_users is not None:
        shape = (n_users,) + shape
    if batch is not None:
        shape = (batch,) + shape
    return shape


def sample_fading(n_sub, n_ant, rng, n_users=None, batch=None) -> np.ndarray:
    """Rayleigh gains, CN(0, 1), shaped ``([batch,] [J,] N, L)``."""
    return complex_normal(_grid_shape(n_sub, n_ant, n_users, batch), 1.0, rng)


def sample_noise(n_sub, n_ant, n0, rng, n_users=None, batch=None) -> np.ndarray:
    """Receiver noise, CN(0, n0), shaped ``([batch,] [J,] N, L)``."""
    if not n0 > 0:
        raise ValueError(f"noise variance must be positive, got {n0}")
    return complex_normal(_grid_shape(n_sub, n_ant, n_users, batch), n0, rng)


def apply_single(x, h, n) -> np.ndarray:
    """``y[a, l] = h[a, l] * x[a] + n[a, l]`` for real ``x`` of shape (..., N)."""
    x = np.asarray(x, dtype=np.float64)
    if h.shape != n.shape or h.shape[:-1] != x.shape:
        raise ValueError(f"shape mismatch: x {x.shape}, h {h.shape}, n {n.shape}")
    return h * x[..., None] + n


def apply_uplink(xs, hs, n) -> np.ndarray:
    """Superposition at one receiver: ``y = sum_j h_j * x_j + n``.

    ``xs`` is (..., J, N), ``hs`` is (..., J, N, L) and ``n`` is (..., N, L).
    """
    xs = np.asarray(xs, dtype=np.float64)
    if hs.shape[:-1] != xs.shape or hs.shape[:-3] + hs.shape[-2:] != n.shape:
        raise ValueError(f"shape mismatch: xs {xs.shape}, hs {hs.shape}, n {n.shape}")
    return np.sum(hs * xs[..., None], axis=-3) + n


def apply_downlink(x, hs, ns) -> np.ndarray:
    """Broadcast of one transmit vector to J receivers: ``y_j = h_j * x + n_j``.

    ``x`` is (..., N); ``hs`` and ``ns`` are (..., J, N, L).
    """
    x = np.asarray(x, dtype=np.float64)
    if hs.shape != ns.shape or hs.shape[:-3] + hs.shape[-2:-1] != x.shape:
        raise ValueError(f"shape mismatch: x {x.shape}, hs {hs.shape}, ns {ns.shape}")
    return hs * x[..., None, :, None] + ns


def combine_energy(y, average: bool = False) -> np.ndarray:
    """Per-sub-carrier energy summed over antennas (or averaged, if ``average``)."""
    re, im = y.real, y.imag
    z = (re * re + im * im).sum(axis=-1)
    if average:
        z = z / y.shape[-1]
    return z


def energy_sensitivity(h, y) -> np.ndarray:
    """``dz/dx`` of ``z = sum_l |h_l x + ...|^2`` for real ``x``: ``2 sum_l Re(conj(h_l) y_l)``."""
    return 2.0 * (h.real * y.real + h.imag * y.imag).sum(axis=-1)


@dataclass(frozen=True)
class SnrSpec:
    """Per-bit SNR of a block carrying ``bits`` bits over ``n_sub`` sub-carriers."""

    ebn0_db: float
    bits: int
    n_sub: int

    @property
    def n0(self) -> float:
        return 1.0

    @property
    def es(self) -> float:
        return snr_to_powers(self)[0]

    @property
    def gamma(self) -> float:
        """Average SNR per sub-carrier, ``E_s / N_0``."""
        return self.es / self.n0


def snr_to_powers(spec: SnrSpec) -> tuple[float, float]:
    """``(E_s, N_0)`` with ``N_0 = 1`` and ``E_b = m E_s / N``, i.e. ``E_s = (N/m) E_b``."""
    if spec.bits < 1 or spec.n_sub < 1:
        raise ValueError("bits and n_sub must be >= 1")
    return spec.n_sub / spec.bits * 10.0 ** (spec.ebn0_db / 10.0), 1.0
