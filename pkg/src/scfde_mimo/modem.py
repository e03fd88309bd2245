"""Square QAM with per-axis binary-reflected Gray labels.

Each axis carries ``m`` bits on the odd-integer levels ``+-1, ..., +-(2**m - 1)``.
The first ``m`` bits of a symbol select the in-phase level, the next ``m``
the quadrature level, most significant bit first. Level index ``i`` counts
down from the largest positive amplitude and is labelled ``i ^ (i >> 1)``,
so an all-zero label sits in the positive corner (``00 -> 1+1j`` for 4-QAM).
"""
from dataclasses import dataclass

import numpy as np

__all__ = ["QamScheme", "map_bits", "slice_symbols", "demap_bits", "bit_errors"]


@dataclass(frozen=True)
class QamScheme:
    """Square QAM with ``M = 2**m`` levels per dimension (m=1,2,3)."""

    m: int

    def __post_init__(self):
        if self.m not in (1, 2, 3):
            raise ValueError(f"m must be 1, 2 or 3 (4/16/64-QAM), got {self.m}")

    @property
    def M(self):
        return 2 ** self.m

    @property
    def bits_per_symbol(self):
        return 2 * self.m

    @property
    def order(self):
        return self.M ** 2

    @property
    def name(self):
        return f"{self.order}-QAM"

    @property
    def levels(self):
        """Per-axis amplitudes indexed by level index (descending)."""
        return (self.M - 1) - 2 * np.arange(self.M, dtype=float)

    @property
    def power(self):
        """Mean symbol energy of the unscaled lattice: 2, 10 or 42."""
        return 2.0 * (self.M ** 2 - 1) / 3.0

    @classmethod
    def from_order(cls, order):
        table = {4: 1, 16: 2, 64: 3}
        try:
            return cls(table[int(order)])
        except (KeyError, ValueError):
            raise ValueError(f"unsupported QAM order {order!r}; use 4, 16 or 64") from None

    def constellation(self):
        """All points, indexed by their integer label (I bits high)."""
        labels = np.arange(self.order)
        bits = ((labels[:, None] >> np.arange(self.bits_per_symbol - 1, -1, -1)) & 1).astype(np.uint8)
        return map_bits(bits.ravel(), self)


def _gray(i):
    return i ^ (i >> 1)


def _gray_inverse(g, m):
    i = g.copy()
    shift = 1
    while shift < m:
        i ^= i >> shift
        shift <<= 1
    return i


def _axis_bits_to_level(bits, m):
    weights = 1 << np.arange(m - 1, -1, -1)
    label = bits @ weights
    return _gray_inverse(label, m)


def map_bits(bits, scheme):
    """Map a flat bit array onto Gray-labelled QAM symbols.

    Raises ``ValueError`` if ``len(bits)`` is not a multiple of ``2m``.
    """
    bits = np.asarray(bits)
    k = scheme.bits_per_symbol
    if bits.ndim != 1 or bits.size % k:
        raise ValueError(f"bit count {bits.size} is not a multiple of {k}")
    if bits.size and not np.all((bits == 0) | (bits == 1)):
        raise ValueError("bits must be 0 or 1")
    groups = bits.reshape(-1, k).astype(np.int64)
    m = scheme.m
    levels = scheme.levels
    i_idx = _axis_bits_to_level(groups[:, :m], m)
    q_idx = _axis_bits_to_level(groups[:, m:], m)
    return levels[i_idx] + 1j * levels[q_idx]


def _slice_axis(v, M):
    a = 2.0 * np.floor(v / 2.0) + 1.0
    # v on an even boundary: prefer the smaller magnitude, +1 at zero
    a = np.where((v > 0) & (np.mod(v, 2.0) == 0.0), v - 1.0, a)
    return np.clip(a, -(M - 1), M - 1)


def slice_symbols(y, scheme):
    """Nearest lattice point; ties go to the smaller amplitude, then +."""
    y = np.asarray(y, dtype=np.complex128)
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite detector output")
    return _slice_axis(y.real, scheme.M) + 1j * _slice_axis(y.imag, scheme.M)


def _level_index(a, M):
    idx = ((M - 1) - a) / 2.0
    ok = (idx == np.round(idx)) & (idx >= 0) & (idx <= M - 1)
    return idx, ok


def _labels(points, scheme):
    points = np.asarray(points, dtype=np.complex128)
    M = scheme.M
    i_idx, ok_i = _level_index(points.real, M)
    q_idx, ok_q = _level_index(points.imag, M)
    if not (np.all(ok_i) and np.all(ok_q)):
        raise ValueError(f"point(s) not on the {scheme.name} lattice")
    return _gray(i_idx.astype(np.int64)), _gray(q_idx.astype(np.int64))


def demap_bits(points, scheme):
    """Inverse of :func:`map_bits` for points exactly on the lattice."""
    li, lq = _labels(np.ravel(points), scheme)
    shifts = np.arange(scheme.m - 1, -1, -1)
    bi = (li[:, None] >> shifts) & 1
    bq = (lq[:, None] >> shifts) & 1
    return np.concatenate([bi, bq], axis=1).astype(np.uint8).ravel()


def bit_errors(tx_points, rx_points, scheme, axis=None):
    """Count differing bits between two arrays of lattice points."""
    ti, tq = _labels(tx_points, scheme)
    ri, rq = _labels(rx_points, scheme)
    diff = np.bitwise_xor(ti, ri), np.bitwise_xor(tq, rq)
    count = np.zeros(np.shape(ti), dtype=np.int64)
    for d in diff:
        for b in range(scheme.m):
            count += (d >> b) & 1
    return count.sum(axis=axis)
