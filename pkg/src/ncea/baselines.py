"""Hand-crafted comparison schemes detected with the noncoherent ML rule.

* NC-OFDM-IM: K of N sub-carriers active with equal amplitude; the message is
  the activation pattern.
* PAM-MED: nonnegative amplitudes with equally spaced energies, detected
  independently on each sub-carrier.
* NC-OMA: J users on disjoint slices of n = N/J sub-carriers, each running
  one of the above on its slice.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .channel import SnrSpec, complex_normal, snr_to_powers
from .montecarlo import SingleUserScheme
from .nc_ea import decode_ml


@dataclass(frozen=True)
class ImCodebook(SingleUserScheme):
    """Index-modulation codebook; ``patterns`` holds the active sub-carriers per message."""

    n_sub: int
    k: int
    es: float
    patterns: tuple[tuple[int, ...], ...]

    @property
    def n_msg(self) -> int:
        return len(self.patterns)

    @property
    def bits(self) -> int:
        return int(math.log2(self.n_msg))

    @property
    def amplitude(self) -> float:
        return math.sqrt(self.n_sub * self.es / self.k)

    def codewords(self, es: float | None = None) -> np.ndarray:
        es = self.es if es is None else es
        book = np.zeros((self.n_msg, self.n_sub))
        for i, pattern in enumerate(self.patterns):
            book[i, list(pattern)] = math.sqrt(self.n_sub * es / self.k)
        return book

    def detect(self, z, es, n0, n_ant):
        return decode_ml(self.codewords(es), z, n0, n_ant)


def build_im_codebook(n_sub: int, k: int, es: float = 1.0) -> ImCodebook:
    """First ``2**floor(log2 C(N, K))`` K-subsets of the sub-carriers in lexicographic order."""
    if not 1 <= k <= n_sub:
        raise ValueError(f"need 1 <= K <= N, got N={n_sub}, K={k}")
    total = math.comb(n_sub, k)
    if total < 2:
        raise ValueError(f"C({n_sub},{k}) = {total} patterns cannot carry a bit")
    m0 = int(math.floor(math.log2(total)))
    patterns = tuple(itertools.islice(itertools.combinations(range(n_sub), k), 2**m0))
    return ImCodebook(n_sub, k, es, patterns)


def im_detect(codebook: ImCodebook, z, n0: float, n_ant: int):
    """Noncoherent ML over the IM codewords."""
    return decode_ml(codebook.codewords(), z, n0, n_ant)


@dataclass(frozen=True)
class PamConstellation:
    amplitudes: np.ndarray
    es: float

    @property
    def order(self) -> int:
        return len(self.amplitudes)


def pam_energies(order: int, es: float) -> np.ndarray:
    return 2.0 * es * np.arange(order) / (order - 1)


def build_pam_med(order: int, es: float = 1.0) -> PamConstellation:
    """Energies ``a_d^2 = 2 E_s (d-1)/(D-1)``: anchored at zero, mean ``E_s``."""
    if order < 2:
        raise ValueError("PAM order D must be >= 2")
    return PamConstellation(np.sqrt(pam_energies(order, es)), es)


def pam_detect_per_subcarrier(constellation: PamConstellation, z, n0: float, n_ant: int) -> np.ndarray:
    """Per-sub-carrier ML symbol index (ties -> lowest) for energies ``z`` of shape (..., N)."""
    if not n0 > 0 or n_ant < 1:
        raise ValueError("need n0 > 0 and n_ant >= 1")
    z = np.asarray(z, dtype=np.float64)
    e = constellation.amplitudes**2 + n0
    metric = z[..., None] / e + n_ant * np.log(e)
    return np.argmin(metric, axis=-1)


@dataclass(frozen=True)
class PamScheme(SingleUserScheme):
    """Independent PAM-MED on each of ``n_sub`` sub-carriers.

    Message ``i`` is the base-D number whose digits (most significant first)
    are the per-sub-carrier symbols, matching ``itertools.product`` order.
    """

    n_sub: int
    order: int
    es: float = 1.0

    def __post_init__(self):
        if self.order < 2 or self.order & (self.order - 1):
            raise ValueError("PAM order must be a power of two >= 2 to carry whole bits")
        if self.n_sub < 1:
            raise ValueError("n_sub must be >= 1")

    @property
    def n_msg(self) -> int:
        return self.order**self.n_sub

    @property
    def bits(self) -> int:
        return self.n_sub * int(math.log2(self.order))

    def constellation(self, es: float | None = None) -> PamConstellation:
        return build_pam_med(self.order, self.es if es is None else es)

    def codewords(self, es: float | None = None) -> np.ndarray:
        amps = self.constellation(es).amplitudes
        return np.array(list(itertools.product(amps, repeat=self.n_sub)))

    def detect(self, z, es, n0, n_ant):
        symbols = pam_detect_per_subcarrier(self.constellation(es), z, n0, n_ant)
        weights = self.order ** np.arange(self.n_sub - 1, -1, -1)
        return symbols @ weights


@dataclass(frozen=True)
class OmaAllocation:
    """J users on equal disjoint slices; ``scheme`` is the per-user scheme on n = N/J sub-carriers."""

    n_users: int
    n_sub: int
    scheme: SingleUserScheme

    def __post_init__(self):
        if self.n_users < 1 or self.n_sub % self.n_users:
            raise ValueError(f"J={self.n_users} must divide N={self.n_sub}")
        if self.scheme.n_sub != self.n_sub // self.n_users:
            raise ValueError("per-user scheme must span N/J sub-carriers")

    @property
    def slices(self) -> list[range]:
        n = self.n_sub // self.n_users
        return [range(j * n, (j + 1) * n) for j in range(self.n_users)]


class OmaSystem:
    """Orthogonal multiuser baseline.

    The SNR per bit refers to the whole band, as for the non-orthogonal
    systems: ``E_s = (N/m) 10^(dB/10)``. Each user concentrates its block
    energy ``N E_s`` on its own n sub-carriers, i.e. per-sub-carrier power
    ``J E_s``, so both access schemes spend the same energy per user.
    """

    def __init__(self, alloc: OmaAllocation):
        self.alloc = alloc
        self.scheme = alloc.scheme

    @property
    def n_users(self) -> int:
        return self.alloc.n_users

    @property
    def n_sub(self) -> int:
        return self.alloc.n_sub

    @property
    def n_msg(self) -> int:
        return self.scheme.n_msg

    @property
    def bits(self) -> int:
        return self.scheme.bits

    def simulate_chunk(self, ebn0_db, n_ant, size, rng, fading=True, noise=True) -> np.ndarray:
        es, n0 = snr_to_powers(SnrSpec(ebn0_db, self.bits, self.n_sub))
        es_user = self.n_users * es
        book = self.scheme.codewords(es_user)
        J, n = self.n_users, self.scheme.n_sub
        msgs = rng.integers(0, self.n_msg, (size, J))
        shape = (size, J, n, n_ant)
        h = complex_normal(shape, 1.0, rng) if fading else np.ones(shape, np.complex128)
        noise_grid = complex_normal(shape, n0, rng) if noise else np.zeros(shape, np.complex128)
        y = h * book[msgs][..., None] + noise_grid
        z = (y.real**2 + y.imag**2).sum(axis=-1)  # (T, J, n)
        decided = np.stack([self.scheme.detect(z[:, j], es_user, n0, n_ant) for j in range(J)], axis=1)
        return np.count_nonzero(decided != msgs, axis=0)


def oma_system(alloc: OmaAllocation) -> OmaSystem:
    return OmaSystem(alloc)


def oma_im(n_users: int, n_sub: int, k: int) -> OmaSystem:
    if n_users < 1 or n_sub % n_users:
        raise ValueError(f"J={n_users} must divide N={n_sub}")
    return OmaSystem(OmaAllocation(n_users, n_sub, build_im_codebook(n_sub // n_users, k)))


def oma_pam(n_users: int, n_sub: int, order: int) -> OmaSystem:
    if n_users < 1 or n_sub % n_users:
        raise ValueError(f"J={n_users} must divide N={n_sub}")
    return OmaSystem(OmaAllocation(n_users, n_sub, PamScheme(n_sub // n_users, order)))
