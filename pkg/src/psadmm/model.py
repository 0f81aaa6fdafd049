"""Square-QAM constellations, bit mapping, binary decomposition, and channel model.

The transmit alphabet per complex symbol is the square QAM grid whose
real and imaginary parts each take the odd-integer levels
``{-(2^Q - 1), ..., -3, -1, 1, 3, ..., 2^Q - 1}``.  Every such symbol
vector ``x`` can be written uniquely as ``x = sum_q 2^(q-1) * x_q`` with
all real/imag entries of every part ``x_q`` equal to +-1; that binary
decomposition is what the sharing-form detector operates on.

Bit mapping is a per-dimension binary-reflected Gray code (adjacent
amplitude levels differ in exactly one bit), with each symbol carrying
its Q real-part bits followed by its Q imaginary-part bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


__all__ = [
    "Constellation",
    "BinaryDecomposition",
    "TransmissionInstance",
    "bits_to_symbols",
    "symbols_to_bits",
    "decompose",
    "recompose",
    "generate_instance",
    "noise_variance",
    "hard_slice",
    "sign_decision",
]


@dataclass(frozen=True)
class Constellation:
    """Square-QAM alphabet of order ``Q`` (``4^Q`` points, ``2Q`` bits/symbol)."""

    q_order: int
    levels: np.ndarray
    bits_per_symbol: int
    symbol_energy: float

    @classmethod
    def of_order(cls, q_order: int) -> "Constellation":
        """Build the constellation for a given order ``Q >= 1``.

        ``symbol_energy`` is the exact mean of ``|s|^2`` over all ``4^Q``
        points, which closed-forms to ``2*(4^Q - 1)/3`` (an integer for
        every ``Q``).
        """
        if q_order < 1:
            raise ValueError(f"q_order must be >= 1, got {q_order}")
        m = 1 << q_order
        levels = np.arange(-(m - 1), m, 2, dtype=np.int64)
        energy = 2 * (4**q_order - 1) // 3
        return cls(
            q_order=q_order,
            levels=levels,
            bits_per_symbol=2 * q_order,
            symbol_energy=float(energy),
        )


@dataclass(frozen=True)
class BinaryDecomposition:
    """Weighted-binary representation of a constellation vector.

    ``parts[q]`` (0-indexed) carries weight ``2^q``; every real/imag
    entry of every part is exactly +1 or -1.
    """

    parts: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class TransmissionInstance:
    """One realization of the uplink model ``r = H x + n``."""

    H: np.ndarray
    x: np.ndarray
    n: np.ndarray
    r: np.ndarray
    snr_db: float
    seed: int


def _gray_decode(g: np.ndarray) -> np.ndarray:
    """Invert the binary-reflected Gray code ``g = m ^ (m >> 1)``."""
    m = g.copy()
    shift = m >> 1
    while np.any(shift):
        m ^= shift
        shift >>= 1
    return m


def _bits_to_levels(bits: np.ndarray, q_order: int) -> np.ndarray:
    """Map groups of Q bits (MSB first, Gray-coded) to amplitude levels."""
    weights = 1 << np.arange(q_order - 1, -1, -1, dtype=np.int64)
    g = bits.reshape(-1, q_order) @ weights
    m = _gray_decode(g)
    return 2 * m - ((1 << q_order) - 1)


def _levels_to_bits(levels: np.ndarray, q_order: int) -> np.ndarray:
    """Inverse of :func:`_bits_to_levels`."""
    m = (levels + ((1 << q_order) - 1)) // 2
    g = m ^ (m >> 1)
    shifts = np.arange(q_order - 1, -1, -1, dtype=np.int64)
    return ((g[:, None] >> shifts) & 1).reshape(-1)


def bits_to_symbols(bits: np.ndarray, c: Constellation) -> np.ndarray:
    """Map a block of ``U * 2Q`` bits onto ``U`` constellation symbols.

    Each symbol consumes ``2Q`` consecutive bits: the first ``Q`` select
    the real amplitude level, the next ``Q`` the imaginary one, both
    through the Gray map.
    """
    bits = np.asarray(bits, dtype=np.int64)
    if bits.ndim != 1 or bits.size % c.bits_per_symbol != 0:
        raise ValueError(
            f"bit block length must be a multiple of {c.bits_per_symbol}, got {bits.size}"
        )
    if not np.all((bits == 0) | (bits == 1)):
        raise ValueError("bits must be 0 or 1")
    pairs = bits.reshape(-1, 2, c.q_order)
    re = _bits_to_levels(pairs[:, 0, :].reshape(-1), c.q_order)
    im = _bits_to_levels(pairs[:, 1, :].reshape(-1), c.q_order)
    return re + 1j * im.astype(np.float64)


def symbols_to_bits(s: np.ndarray, c: Constellation) -> np.ndarray:
    """Recover the bit block that maps to ``s``; inverse of :func:`bits_to_symbols`."""
    s = np.asarray(s, dtype=np.complex128)
    re = np.real(s)
    im = np.imag(s)
    for name, part in (("real", re), ("imag", im)):
        ints = part.astype(np.int64)
        if np.any(part != ints) or not np.all(np.isin(ints, c.levels)):
            raise ValueError(f"symbol {name} parts must be constellation levels")
    re_bits = _levels_to_bits(re.astype(np.int64), c.q_order).reshape(-1, c.q_order)
    im_bits = _levels_to_bits(im.astype(np.int64), c.q_order).reshape(-1, c.q_order)
    return np.stack([re_bits, im_bits], axis=1).reshape(-1)


def decompose(x: np.ndarray, q_order: int) -> BinaryDecomposition:
    """Split a constellation vector into its unique weighted +-1 parts.

    Each odd level ``v`` in ``[-(2^Q - 1), 2^Q - 1]`` satisfies
    ``v = sum_q 2^(q-1) s_q`` with ``s_q = 2*bit_(q-1)((v + 2^Q - 1)/2) - 1``.
    Real and imaginary parts decompose independently.
    """
    x = np.asarray(x, dtype=np.complex128)
    top = (1 << q_order) - 1
    parts = []
    comps = []
    for name, part in (("real", np.real(x)), ("imag", np.imag(x))):
        ints = part.astype(np.int64)
        if np.any(part != ints):
            raise ValueError(f"{name} parts must be integers")
        if np.any((ints % 2) == 0) or np.any(np.abs(ints) > top):
            raise ValueError(f"{name} parts must be odd integers in [-{top}, {top}]")
        comps.append((ints + top) >> 1)
    m_re, m_im = comps
    for q in range(q_order):
        s_re = 2.0 * ((m_re >> q) & 1) - 1.0
        s_im = 2.0 * ((m_im >> q) & 1) - 1.0
        parts.append(s_re + 1j * s_im)
    return BinaryDecomposition(parts=tuple(parts))


def recompose(d: BinaryDecomposition) -> np.ndarray:
    """Sum the weighted parts back into the original vector (exact integers)."""
    re = np.zeros(d.parts[0].shape, dtype=np.int64)
    im = np.zeros(d.parts[0].shape, dtype=np.int64)
    for q, part in enumerate(d.parts):
        w = 1 << q
        re += w * np.real(part).astype(np.int64)
        im += w * np.imag(part).astype(np.int64)
    return re + 1j * im.astype(np.float64)


def noise_variance(U: int, c: Constellation, snr_db: float) -> float:
    """Per-receive-entry complex noise variance ``N0`` for a target average SNR.

    The convention is average receive SNR with i.i.d. unit-variance
    channel entries: ``E||Hx||^2 = U * symbol_energy`` per receive
    dimension sum, so ``N0 = U * symbol_energy / 10^(snr_db/10)``.
    ``snr_db = +inf`` is the noiseless sentinel and yields 0.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return U * c.symbol_energy / 10.0 ** (snr_db / 10.0)


def generate_instance(B: int, U: int, c: Constellation, snr_db: float,
                      seed: int) -> TransmissionInstance:
    """Draw one random uplink realization ``r = H x + n``.

    ``H`` has i.i.d. unit-variance complex-Gaussian entries, ``x`` is
    drawn uniformly via random bits, and ``n`` is complex Gaussian with
    per-entry variance :func:`noise_variance`.  The draw order inside
    the seeded generator is fixed (H, then bits, then noise) so a seed
    pins the instance bitwise; the same seed at a different ``snr_db``
    reuses the identical ``H``, ``x``, and unit noise draws, which is
    what makes SNR sweeps use common random numbers.
    """
    if U < 1 or B < U:
        raise ValueError(f"need B >= U >= 1, got B={B}, U={U}")
    if not (math.isfinite(snr_db) or (math.isinf(snr_db) and snr_db > 0)):
        raise ValueError(f"snr_db must be finite or +inf, got {snr_db}")
    rng = np.random.default_rng(seed)
    H = (rng.standard_normal((B, U)) + 1j * rng.standard_normal((B, U))) / np.sqrt(2.0)
    bits = rng.integers(0, 2, size=U * c.bits_per_symbol, dtype=np.int64)
    x = bits_to_symbols(bits, c)
    unit = (rng.standard_normal(B) + 1j * rng.standard_normal(B)) / np.sqrt(2.0)
    n0 = noise_variance(U, c, snr_db)
    n = np.sqrt(n0) * unit
    r = H @ x + n
    return TransmissionInstance(H=H, x=x, n=n, r=r, snr_db=float(snr_db), seed=int(seed))


def hard_slice(v: np.ndarray, c: Constellation) -> np.ndarray:
    """Quantize each entry to the nearest constellation point.

    Real and imaginary parts are sliced independently to the nearest odd
    level, ties (even-integer inputs, including 0) rounding away from
    zero, with 0 itself going to +1; values beyond the outermost level
    clamp to it.
    """
    v = np.asarray(v, dtype=np.complex128)
    top = (1 << c.q_order) - 1

    def slice_axis(w: np.ndarray) -> np.ndarray:
        s = np.where(w < 0, -1.0, 1.0)
        mag = 2.0 * np.floor(np.abs(w) / 2.0) + 1.0
        return s * np.minimum(mag, top)

    return slice_axis(np.real(v)) + 1j * slice_axis(np.imag(v))


def sign_decision(parts: tuple[np.ndarray, ...] | list[np.ndarray]) -> np.ndarray:
    """Alternative hard decision: sign each +-1 part, then recompose.

    Zero real/imag components resolve to +1, matching the slicing
    tie-break.
    """
    snapped = tuple(
        np.where(np.real(p) < 0, -1.0, 1.0) + 1j * np.where(np.imag(p) < 0, -1.0, 1.0)
        for p in parts
    )
    return recompose(BinaryDecomposition(parts=snapped))
