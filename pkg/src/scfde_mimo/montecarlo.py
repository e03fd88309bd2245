"""Error-counting simulation in the frequency domain.

Each block draws a fresh channel realisation, random bits for every input,
``S = DFT(s)`` and ``Y_k = H_k S_k + N_k`` with per-component noise
variance ``N0 * N``. With a cyclic prefix at least as long as the channel
memory this per-subchannel model is exact, so the prefix is not simulated
explicitly; its cost only enters through ``eta`` in the energy accounting.

Blocks are processed in fixed-size batches and the stopping rule is
checked only between batches, so error counts do not depend on the number
of worker processes.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analysis import BerCurve, aggregate_ber
from .channel import STREAM_MC_CHANNEL, STREAM_MC_DATA, STREAM_STATS, draw_rayleigh, substream
from .detectors import DetectorKind, DfSchedule, build_detection_set, iterative_df_detect, linear_detect, time_domain_outputs
from .modem import bit_errors, map_bits
from .numerics import dft
from .scenario import derive_noise

__all__ = ["McConfig", "run_mc", "simulate_block", "measure_output_stats", "OutputStats"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class McConfig:
    """Stopping rule for one Eb/N0 point.

    A point stops once the final DF iteration has accumulated
    ``min_errors`` bit errors over at least ``min_blocks`` blocks, or when
    ``max_blocks`` is reached (then flagged low-confidence).
    """

    min_errors: int = 200
    max_blocks: int = 2000
    min_blocks: int = 10
    batch_blocks: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.min_errors < 1:
            raise ValueError("min_errors must be at least 1")
        if self.max_blocks < 1 or self.batch_blocks < 1 or self.min_blocks < 1:
            raise ValueError("block limits must be positive")


def _transmit(scenario, rng):
    amp = scenario.amplitudes()
    pts = np.empty((scenario.n_tx, scenario.block_len), dtype=np.complex128)
    for j, scheme in enumerate(scenario.schemes):
        bits = rng.integers(0, 2, scheme.bits_per_symbol * scenario.block_len, dtype=np.uint8)
        pts[j] = map_bits(bits, scheme)
    return pts, pts * amp[:, None]


def _noise(rng, shape, n0, block_len):
    if n0 == 0.0:
        return np.zeros(shape, dtype=np.complex128)
    g = rng.standard_normal(shape + (2,))
    return (g[..., 0] + 1j * g[..., 1]) * np.sqrt(n0 * block_len / 2.0)


def simulate_block(scenario, schedule, noise, seed, point, block):
    """Run one block; returns bit errors per iteration and input, shape (P, n_tx).

    The channel is keyed by ``(seed, block)`` only, so every Eb/N0 point
    sees the same sequence of realisations.
    """
    real = draw_rayleigh(
        scenario.profile, scenario.n_tx, scenario.n_rx, scenario.block_len,
        substream(seed, STREAM_MC_CHANNEL, block),
    )
    rng = substream(seed, STREAM_MC_DATA, point, block)
    pts, s = _transmit(scenario, rng)
    S = dft(s, axis=-1).T
    Y = np.einsum("kij,kj->ki", real.H, S)
    Y += _noise(rng, Y.shape, noise.n0, scenario.block_len)
    dec = iterative_df_detect(schedule, real, noise.alpha, Y, scenario.schemes, scenario.amplitudes())
    errs = np.zeros((schedule.iterations, scenario.n_tx), dtype=np.int64)
    for j, scheme in enumerate(scenario.schemes):
        for p in range(schedule.iterations):
            errs[p, j] = bit_errors(pts[j], dec[p, j], scheme)
    return errs


def _batch_job(args):
    scenario, schedule, noise, seed, point, blocks = args
    return [simulate_block(scenario, schedule, noise, seed, point, b) for b in blocks]


def _as_schedule(detector):
    if isinstance(detector, DfSchedule):
        return detector
    return DfSchedule.linear(DetectorKind.parse(detector))


def _block_stderr(block_errors, bits_per_block):
    """Standard error of the pooled BER, treating blocks as the sampling unit."""
    B = len(block_errors)
    rates = np.asarray(block_errors, dtype=float) / bits_per_block
    p = rates.mean()
    binom = np.sqrt(max(p * (1 - p), 0.0) / (B * bits_per_block))
    if B < 2:
        return binom
    return max(rates.std(ddof=1) / np.sqrt(B), binom)


def run_mc(scenario, detector, ebn0_db, mc=None, workers=1, executor=None):
    """Monte Carlo BER over an Eb/N0 grid.

    Parameters
    ----------
    scenario : ScenarioConfig
    detector : DetectorKind, str or DfSchedule
        A plain kind runs the linear detector (a one-iteration schedule).
    ebn0_db : array_like
        Grid; ``inf`` runs noiseless.
    mc : McConfig
    workers : int
        Processes used for the batches; results do not depend on it.

    Returns
    -------
    list of BerCurve
        One curve per DF iteration (length 1 for a linear detector).
    """
    mc = mc or McConfig(seed=scenario.seed)
    schedule = _as_schedule(detector)
    grid = np.atleast_1d(np.asarray(ebn0_db, dtype=float))
    P, nt = schedule.iterations, scenario.n_tx
    bits_per_input = np.array([s.bits_per_symbol for s in scenario.schemes]) * scenario.block_len
    bits_per_block = int(bits_per_input.sum())

    errors = np.zeros((len(grid), P, nt), dtype=np.int64)
    blocks_used = np.zeros(len(grid), dtype=np.int64)
    stderr = np.zeros((len(grid), P))
    low = np.zeros(len(grid), dtype=bool)

    own = None
    if executor is None and workers and workers > 1:
        own = executor = ProcessPoolExecutor(max_workers=workers)
    try:
        for g, x in enumerate(grid):
            noise = derive_noise(scenario, x)
            per_block = []
            next_block = 0
            while True:
                stop = min(next_block + mc.batch_blocks, mc.max_blocks)
                blocks = list(range(next_block, stop))
                if executor is not None:
                    n_chunks = max(1, min(len(blocks), workers or 1))
                    chunks = [blocks[i::n_chunks] for i in range(n_chunks)]
                    jobs = [(scenario, schedule, noise, mc.seed, g, c) for c in chunks]
                    results = {}
                    for c, res in zip(chunks, executor.map(_batch_job, jobs)):
                        results.update(zip(c, res))
                    per_block += [results[b] for b in blocks]
                else:
                    per_block += _batch_job((scenario, schedule, noise, mc.seed, g, blocks))
                next_block = stop
                total = np.sum(per_block, axis=0)
                if (total[-1].sum() >= mc.min_errors and next_block >= mc.min_blocks) or next_block >= mc.max_blocks:
                    break
            arr = np.stack(per_block)  # (B, P, NT)
            errors[g] = arr.sum(axis=0)
            blocks_used[g] = len(per_block)
            low[g] = errors[g, -1].sum() < mc.min_errors
            for p in range(P):
                stderr[g, p] = _block_stderr(arr[:, p, :].sum(axis=1), bits_per_block)
            log.info("Eb/N0=%s dB: %d blocks, %d errors (last iteration)", x, len(per_block), errors[g, -1].sum())
    finally:
        if own is not None:
            own.shutdown()

    curves = []
    for p in range(P):
        n_bits = blocks_used[:, None] * bits_per_input[None, :]
        ber = errors[:, p, :] / n_bits
        label = schedule.label if P == 1 else f"{schedule.label}_it{p + 1}"
        curves.append(
            BerCurve(
                method="monte-carlo",
                x=grid.copy(),
                ber=ber,
                aggregate=errors[:, p, :].sum(axis=1) / (blocks_used * bits_per_block),
                stderr=stderr[:, p],
                n_realizations=blocks_used.copy(),
                seed=mc.seed,
                label=label,
                n_bits=blocks_used * bits_per_block,
                n_errors=errors[:, p, :].sum(axis=1),
                low_confidence=low.copy(),
                meta={"iteration": p + 1},
            )
        )
    return curves


@dataclass(frozen=True)
class OutputStats:
    """Empirical per-input statistics at the linear detector output.

    Powers are time-domain, per symbol: ``signal = |gamma|^2 sigma^2`` etc.
    """

    gamma: np.ndarray
    signal: np.ndarray
    isi: np.ndarray
    mui: np.ndarray
    noise: np.ndarray
    n_samples: int
    isi_se: np.ndarray = None
    mui_se: np.ndarray = None
    noise_se: np.ndarray = None
    gamma_se: np.ndarray = None


def measure_output_stats(scenario, realization, kind, ebn0_db, n_blocks=100, seed=0):
    """Measure each term of the detector output by simulation on a fixed channel.

    The frequency-domain output is split into gain, ISI, MUI/MSI and noise
    parts, each transformed to the time domain and its power averaged over
    ``n_blocks * N`` symbols. ``gamma`` is estimated as
    ``E[y s*] / sigma^2`` from the full output.
    """
    noise = derive_noise(scenario, ebn0_db)
    dset = build_detection_set(kind, realization, noise.alpha)
    nt, N = scenario.n_tx, scenario.block_len
    idx = np.arange(nt)
    Gam = dset.Gamma
    diag = Gam[:, idx, idx]
    off = Gam.copy()
    off[:, idx, idx] = 0.0
    sigma2 = scenario.symbol_powers()
    acc = {k: [] for k in ("corr", "isi", "mui", "noise")}
    for b in range(n_blocks):
        rng = substream(seed, STREAM_STATS, b)
        _, s = _transmit(scenario, rng)
        S = dft(s, axis=-1).T
        Nk = _noise(rng, (N, scenario.n_rx), noise.n0, N)
        Y = np.einsum("kij,kj->ki", realization.H, S) + Nk
        y = time_domain_outputs(linear_detect(dset, Y))
        isi = time_domain_outputs((diag - dset.gamma) * S)
        mui = time_domain_outputs(np.einsum("kjl,kl->kj", off, S))
        nz = time_domain_outputs(np.einsum("kji,ki->kj", dset.D, Nk))
        acc["corr"].append(np.mean(y * np.conj(s), axis=1) / sigma2)
        acc["isi"].append(np.mean(np.abs(isi) ** 2, axis=1))
        acc["mui"].append(np.mean(np.abs(mui) ** 2, axis=1))
        acc["noise"].append(np.mean(np.abs(nz) ** 2, axis=1))
    arr = {k: np.array(v) for k, v in acc.items()}

    def se(a):
        return a.std(axis=0, ddof=1) / np.sqrt(len(a)) if len(a) > 1 else np.zeros(a.shape[1:])

    gamma = arr["corr"].mean(axis=0)
    return OutputStats(
        gamma=gamma,
        signal=np.abs(gamma) ** 2 * sigma2,
        isi=arr["isi"].mean(axis=0),
        mui=arr["mui"].mean(axis=0),
        noise=arr["noise"].mean(axis=0),
        n_samples=n_blocks * N,
        isi_se=se(arr["isi"]),
        mui_se=se(arr["mui"]),
        noise_se=se(arr["noise"]),
        gamma_se=np.hypot(se(arr["corr"].real), se(arr["corr"].imag)),
    )


def mc_aggregate(curve, schemes):
    """Bit-weighted aggregate of a curve's per-input BER (for cross-checks)."""
    return aggregate_ber(curve.ber, schemes)
