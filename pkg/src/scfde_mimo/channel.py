"""Multipath MIMO channel realisations and their frequency responses."""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .numerics import dft

__all__ = [
    "PowerDelayProfile",
    "ChannelRealization",
    "draw_rayleigh",
    "los_single_path",
    "substream",
    "save_realizations",
    "load_realizations",
]

# stream tags for substream(); keep stable, they are part of reproducibility
STREAM_CHANNEL = 1
STREAM_MC_DATA = 2
STREAM_MC_CHANNEL = 3
STREAM_STATS = 4


def substream(seed, *key):
    """Counter-based generator for ``(seed, *key)``.

    Philox keyed through ``SeedSequence.spawn_key`` so the draw for a
    given key does not depend on what else was drawn, or in which process.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class PowerDelayProfile:
    """Per-tap variances ``P_n`` of the channel impulse response."""

    taps: tuple

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=float)
        if taps.ndim != 1 or taps.size == 0:
            raise ValueError("profile needs at least one tap")
        if np.any(taps < 0) or not np.all(np.isfinite(taps)):
            raise ValueError("tap variances must be finite and non-negative")
        if taps.sum() <= 0:
            raise ValueError("profile has zero total power")
        object.__setattr__(self, "taps", tuple(float(t) for t in taps))

    @classmethod
    def linear_decay(cls, n_taps=64):
        """``P_n = 1 - n/(n_taps - 1)``; the 64-tap case sums to 32."""
        n = np.arange(n_taps)
        return cls(tuple(1.0 - n / (n_taps - 1)))

    @classmethod
    def flat(cls, power=1.0):
        return cls((float(power),))

    @property
    def p_sigma(self):
        return float(np.sum(self.taps))

    @property
    def length(self):
        return len(self.taps)

    def to_json(self):
        return list(self.taps)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """One block-fading channel draw.

    ``cir`` has shape ``(n_rx, n_tx, L)`` with taps beyond ``L`` implicitly
    zero. ``H`` is the per-subchannel stack, shape ``(N, n_rx, n_tx)``.
    """

    cir: np.ndarray
    block_len: int
    p_sigma: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.cir.ndim != 3:
            raise ValueError("cir must have shape (n_rx, n_tx, taps)")
        if self.cir.shape[2] > self.block_len:
            raise ValueError("impulse response longer than the block")

    @property
    def n_rx(self):
        return self.cir.shape[0]

    @property
    def n_tx(self):
        return self.cir.shape[1]

    @cached_property
    def H(self):
        padded = np.zeros((self.n_rx, self.n_tx, self.block_len), dtype=np.complex128)
        padded[..., : self.cir.shape[2]] = self.cir
        cfr = dft(padded, axis=-1)
        return np.ascontiguousarray(np.moveaxis(cfr, -1, 0))

    @cached_property
    def gram(self):
        """``G_k = H_k^H H_k`` for every subchannel, shape (N, n_tx, n_tx)."""
        h = self.H
        return np.conj(np.swapaxes(h, 1, 2)) @ h

    def column(self, j):
        """Single-input (SIMO) view of transmit antenna ``j``."""
        return ChannelRealization(self.cir[:, j : j + 1, :], self.block_len, self.p_sigma, dict(self.meta))


def draw_rayleigh(profile, n_tx, n_rx, block_len, rng):
    """Independent circularly-symmetric Gaussian taps with variances ``P_n``.

    ``rng`` is a ``numpy.random.Generator``; draws are made in a fixed
    order (tap-major over receive then transmit antenna) so a given
    generator state always yields the same realisation.
    """
    taps = np.asarray(profile.taps)
    if taps.size > block_len:
        raise ValueError(f"profile has {taps.size} taps but block length is {block_len}")
    scale = np.sqrt(taps / 2.0)
    g = rng.standard_normal((n_rx, n_tx, taps.size, 2))
    cir = (g[..., 0] + 1j * g[..., 1]) * scale
    return ChannelRealization(cir, block_len, profile.p_sigma)


def los_single_path(n_rx, p_sigma, block_len=256, n_tx=1):
    """Single-path channel with ``|H_k|^2 = p_sigma`` for every pair and k."""
    cir = np.full((n_rx, n_tx, 1), np.sqrt(p_sigma), dtype=np.complex128)
    return ChannelRealization(cir, block_len, float(p_sigma), {"kind": "los"})


def save_realizations(path, realizations):
    """Dump an ensemble to ``.npz`` so it can be replayed across detectors."""
    if not realizations:
        raise ValueError("nothing to save")
    cirs = np.stack([r.cir for r in realizations])
    first = realizations[0]
    np.savez_compressed(
        path,
        cir=cirs,
        block_len=first.block_len,
        p_sigma=first.p_sigma,
    )


def load_realizations(path):
    with np.load(path) as data:
        block_len = int(data["block_len"])
        p_sigma = float(data["p_sigma"])
        return [ChannelRealization(c, block_len, p_sigma) for c in data["cir"]]
