"""Modulation, channel and noise models for the uplink y = H x + n.

Square Gray-mapped QAM (QPSK, 16-QAM, 64-QAM) normalized to unit average
symbol energy, i.i.d. Rayleigh fading channel draws, circularly symmetric
complex Gaussian noise, and the SNR convention used by every simulation
in this package:

    sigma2 = U / 10**(snr_db / 10)

i.e. ``snr_db`` is the average receive SNR per BS antenna with
unit-energy symbols and unit-variance channel entries (E||Hx||^2 / N = U).

Randomness comes from counter-based Philox streams keyed by
``(master_seed, substream_index)``, so per-trial draws are independent
of execution order and worker count.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

QPSK, QAM16, QAM64 = 4, 16, 64

_MOD_NAMES = {4: "qpsk", 16: "16qam", 64: "64qam"}


@dataclass(frozen=True)
class Constellation:
    """Gray-mapped square QAM alphabet with unit average energy.

    ``points[label]`` is the symbol whose bit pattern is the binary
    expansion of ``label``; the first half of the bits selects the real
    axis, the second half the imaginary axis, each through a reflected
    Gray code. ``scale`` maps odd integer levels to normalized
    coordinates.
    """

    order: int
    bits_per_symbol: int
    levels_per_axis: int
    scale: float
    points: np.ndarray

    @property
    def name(self) -> str:
        return _MOD_NAMES[self.order]

    @property
    def box_radius(self) -> float:
        """Largest per-axis coordinate, the ADMIN clipping bound."""
        return (self.levels_per_axis - 1) * self.scale


def gray_encode(k: np.ndarray) -> np.ndarray:
    return k ^ (k >> 1)


def gray_decode(g: np.ndarray) -> np.ndarray:
    k = np.array(g, copy=True)
    shift = k >> 1
    while shift.any():
        k ^= shift
        shift >>= 1
    return k


@lru_cache(maxsize=None)
def make_constellation(order: int) -> Constellation:
    """Build the Gray-mapped constellation for order 4, 16 or 64."""
    if order not in _MOD_NAMES:
        raise ValueError(f"unsupported constellation order {order}")
    b = int(np.log2(order))
    m = int(np.sqrt(order))
    half = b // 2
    scale = 1.0 / np.sqrt(2.0 * (order - 1) / 3.0)
    labels = np.arange(order)
    gi = labels >> half
    gq = labels & (m - 1)
    ki = gray_decode(gi)
    kq = gray_decode(gq)
    levels_i = 2 * ki - (m - 1)
    levels_q = 2 * kq - (m - 1)
    points = (levels_i + 1j * levels_q) * scale
    return Constellation(order, b, m, scale, points)


def modulate(bits: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Map a flat bit array (length U * bits_per_symbol) to symbols."""
    b = constellation.bits_per_symbol
    bits = np.asarray(bits)
    if bits.ndim != 1 or bits.size % b != 0:
        raise ValueError(f"bit count {bits.size} is not a multiple of {b}")
    groups = bits.reshape(-1, b)
    weights = 1 << np.arange(b - 1, -1, -1)
    labels = (groups * weights).sum(axis=1)
    return constellation.points[labels]


def _axis_index(coord: np.ndarray, constellation: Constellation) -> np.ndarray:
    # nearest level index with ties resolved toward the smaller level
    m = constellation.levels_per_axis
    u = (coord / constellation.scale + (m - 1)) / 2.0
    idx = np.ceil(u - 0.5)
    return np.clip(idx, 0, m - 1).astype(np.int64)


def hard_slice(
    x_soft: np.ndarray, constellation: Constellation
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-point decision; returns (hard symbols, flat bit array).

    The QAM grid factorizes per axis, so the Euclidean-nearest point is
    the per-axis nearest level; exact midpoints are rounded toward the
    smaller coordinate (equivalently: toward the point with smaller real,
    then smaller imaginary part).
    """
    x_soft = np.asarray(x_soft)
    half = constellation.bits_per_symbol // 2
    m = constellation.levels_per_axis
    ki = _axis_index(x_soft.real, constellation)
    kq = _axis_index(x_soft.imag, constellation)
    labels = (gray_encode(ki) << half) | gray_encode(kq)
    symbols = constellation.points[labels]
    shifts = np.arange(constellation.bits_per_symbol - 1, -1, -1)
    bits = ((labels[:, None] >> shifts[None, :]) & 1).astype(np.uint8).reshape(-1)
    return symbols, bits


def substream(master_seed: int, index: int) -> np.random.Generator:
    """Independent Philox stream keyed by (master_seed, index)."""
    return np.random.Generator(np.random.Philox(key=[master_seed, index]))


def draw_channel(n: int, u: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. Rayleigh channel: entries (g1 + i g2) / sqrt(2), g ~ N(0,1)."""
    if n < 1 or u < 1:
        raise ValueError("channel dimensions must be positive")
    g = rng.standard_normal((2, n, u))
    return (g[0] + 1j * g[1]) / np.sqrt(2.0)


def draw_noise_unit(n: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance circularly symmetric complex Gaussian vector."""
    g = rng.standard_normal((2, n))
    return (g[0] + 1j * g[1]) / np.sqrt(2.0)


def add_noise(y_clean: np.ndarray, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. CN(0, sigma2) noise per component."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    if sigma2 == 0.0:
        return y_clean.copy()
    return y_clean + np.sqrt(sigma2) * draw_noise_unit(y_clean.shape[0], rng)


def sigma2_from_snr(snr_db: float, u: int) -> float:
    """Noise variance from per-BS-antenna receive SNR in dB for U users."""
    if u < 1:
        raise ValueError("u must be positive")
    return u / 10.0 ** (snr_db / 10.0)


def constellation_csv(constellation: Constellation) -> str:
    """Bit-exact label table as CSV text with columns label,re,im."""
    b = constellation.bits_per_symbol
    lines = ["label,re,im"]
    for label in range(constellation.order):
        p = constellation.points[label]
        lines.append(f"{label:0{b}b},{float(p.real)!r},{float(p.imag)!r}")
    return "\n".join(lines) + "\n"
