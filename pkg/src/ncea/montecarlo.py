"""Block-error Monte Carlo with worker-count-independent randomness.

Blocks are split into fixed-size chunks and chunk ``c`` always draws from the
stream ``(seed, STREAM_EVAL, c)``. Which worker runs a chunk therefore never
changes the sampled messages, channels or noise.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from .channel import (
    STREAM_EVAL,
    SnrSpec,
    apply_single,
    combine_energy,
    complex_normal,
    snr_to_powers,
    stream,
)

Z95 = 1.959963984540054
DEFAULT_CHUNK = 10_000


def wilson_interval(errors: int, blocks: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if blocks <= 0:
        raise ValueError("blocks must be >= 1")
    p = errors / blocks
    denom = 1.0 + z * z / blocks
    centre = (p + z * z / (2 * blocks)) / denom
    half = z * math.sqrt(p * (1.0 - p) / blocks + z * z / (4 * blocks * blocks)) / denom
    lo = 0.0 if errors == 0 else max(0.0, centre - half)
    hi = 1.0 if errors == blocks else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class BlerResult:
    errors: int
    blocks: int

    @property
    def bler(self) -> float:
        return self.errors / self.blocks

    @property
    def ci(self) -> tuple[float, float]:
        return wilson_interval(self.errors, self.blocks)


@dataclass(frozen=True)
class MultiUserBler:
    """Per-user error counts over shared channel realisations."""

    errors: tuple[int, ...]
    blocks: int

    @property
    def per_user(self) -> list[BlerResult]:
        return [BlerResult(e, self.blocks) for e in self.errors]

    @property
    def bler(self) -> list[float]:
        return [e / self.blocks for e in self.errors]

    @property
    def mean_bler(self) -> float:
        return sum(self.errors) / (self.blocks * len(self.errors))

    @property
    def fairness_ratio(self) -> float:
        """max/min per-user BLER (inf if some user never errs while another does)."""
        lo, hi = min(self.errors), max(self.errors)
        if hi == 0:
            return 1.0
        return math.inf if lo == 0 else hi / lo


class SingleUserScheme:
    """Mixin: Monte Carlo for any codebook + energy detector.

    Subclasses provide ``n_sub``, ``n_msg``, ``bits``, ``codewords(es)`` and
    ``detect(z, es, n0, n_ant)``.
    """

    n_users = 1

    def simulate_chunk(self, ebn0_db, n_ant, size, rng, fading=True, noise=True) -> np.ndarray:
        es, n0 = snr_to_powers(SnrSpec(ebn0_db, self.bits, self.n_sub))
        book = self.codewords(es)
        msgs = rng.integers(0, self.n_msg, size)
        shape = (size, self.n_sub, n_ant)
        h = complex_normal(shape, 1.0, rng) if fading else np.ones(shape, np.complex128)
        n = complex_normal(shape, n0, rng) if noise else np.zeros(shape, np.complex128)
        z = combine_energy(apply_single(book[msgs], h, n))
        decided = self.detect(z, es, n0, n_ant)
        return np.array([np.count_nonzero(decided != msgs)])


def _run_chunk(scheme, ebn0_db, n_ant, seed, fading, noise, job):
    index, size = job
    return scheme.simulate_chunk(ebn0_db, n_ant, size, stream(seed, STREAM_EVAL, index), fading, noise)


def simulate_errors(
    scheme, ebn0_db, n_ant, blocks, seed=0, chunk=DEFAULT_CHUNK, workers=1, fading=True, noise=True
) -> np.ndarray:
    """Per-user error counts over ``blocks`` independent blocks."""
    if blocks < 1:
        raise ValueError("blocks must be >= 1")
    jobs = [(i, min(chunk, blocks - i * chunk)) for i in range(math.ceil(blocks / chunk))]
    fn = partial(_run_chunk, scheme, ebn0_db, n_ant, seed, fading, noise)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, jobs))
    else:
        parts = [fn(job) for job in jobs]
    return np.sum(parts, axis=0)


def evaluate_bler(scheme, ebn0_db, n_ant, blocks, seed=0, **kwargs) -> BlerResult:
    """BLER of a single-user scheme (first user for multiuser ones)."""
    errors = simulate_errors(scheme, ebn0_db, n_ant, blocks, seed, **kwargs)
    return BlerResult(int(errors[0]), blocks)


def evaluate_multiuser_bler(scheme, ebn0_db, n_ant, blocks, seed=0, **kwargs) -> MultiUserBler:
    errors = simulate_errors(scheme, ebn0_db, n_ant, blocks, seed, **kwargs)
    return MultiUserBler(tuple(int(e) for e in errors), blocks)
