"""Semi-analytical performance evaluation.

Conditional on a channel realisation, the detector output for input j is
treated as signal plus Gaussian-like interference, with

    SINR_j = N |gamma_j|^2 / (beta_j + sum_{l != j} beta_l + alpha_j * sum_k sum_i |D_k[j, i]|^2)

    beta_j = sum_k |Gamma_k[j, j] - gamma_j|^2                      (ISI)
    beta_l = (sigma_l^2 / sigma_j^2) sum_k |Gamma_k[j, l]|^2      (MUI/MSI)

and BER_j is a constellation-specific function of SINR_j. Curves average
the conditional BER over channel realisations.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfc

from .channel import STREAM_CHANNEL, draw_rayleigh, substream
from .detectors import DetectorKind, build_detection_set
from .scenario import derive_noise

__all__ = [
    "qfunc",
    "SinrReport",
    "BerCurve",
    "sinr_linear",
    "ber_from_sinr",
    "iber",
    "simo_mfb",
    "simo_awgn_mfb",
    "semi_analytical_ber",
    "semi_analytical_iber",
    "ensemble_sinr",
    "curves_from_sinr",
    "simo_mfb_curve",
    "ebn0_for_ber",
    "aggregate_ber",
    "ensemble_realization",
]


def qfunc(x):
    """Gaussian tail probability ``Q(x) = erfc(x / sqrt 2) / 2``."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


@dataclass(frozen=True)
class SinrReport:
    """Per-input SINR and its components (all arrays of length n_tx)."""

    signal: np.ndarray
    isi: np.ndarray
    mui: np.ndarray
    noise: np.ndarray

    @property
    def interference(self):
        return self.isi + self.mui

    @property
    def sinr(self):
        den = self.isi + self.mui + self.noise
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.signal / den
        # zero denominator: only reachable without noise and interference
        return np.where(den > 0, out, np.inf)


@dataclass
class BerCurve:
    """BER versus Eb/N0 (or another sweep variable) for one detector.

    ``ber`` has shape (n_points, n_tx). ``stderr`` is the standard error of
    ``aggregate``. For Monte Carlo curves ``n_bits``/``n_errors`` hold exact
    counts and ``low_confidence`` flags points that hit the block limit.
    """

    method: str
    x: np.ndarray
    ber: np.ndarray
    aggregate: np.ndarray
    stderr: np.ndarray
    n_realizations: np.ndarray
    seed: int
    label: str = ""
    x_name: str = "ebn0_db"
    n_bits: np.ndarray = None
    n_errors: np.ndarray = None
    low_confidence: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        order = np.argsort(self.x, kind="stable")
        for name in ("x", "ber", "aggregate", "stderr", "n_realizations", "n_bits", "n_errors", "low_confidence"):
            value = getattr(self, name)
            if value is not None:
                value = np.asarray(value)
                if value.ndim and len(value) == len(order):
                    value = value[order]
                setattr(self, name, value)


def sinr_linear(dset, alpha, sigma2):
    """Evaluate the SINR decomposition for one detector and realisation.

    Parameters
    ----------
    dset : DetectionMatrixSet
    alpha : array_like
        ``N0 / sigma_j^2`` per input (0 for the noiseless limit).
    sigma2 : array_like
        Symbol power per input.
    """
    G = dset.Gamma
    N = dset.block_len
    n = dset.n_tx
    gamma = dset.gamma
    sigma2 = np.asarray(sigma2, dtype=float)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (n,))
    idx = np.arange(n)
    power = np.sum(np.abs(G) ** 2, axis=0)  # (j, l): sum_k |Gamma_k[j,l]|^2
    diag = G[:, idx, idx]
    isi = np.sum(np.abs(diag - gamma) ** 2, axis=0)
    cross = power * (sigma2[None, :] / sigma2[:, None])
    cross[idx, idx] = 0.0
    mui = cross.sum(axis=1)
    noise = alpha * dset.noise_gain if np.any(alpha) else np.zeros(n)
    signal = N * np.abs(gamma) ** 2
    return SinrReport(signal, isi, mui, noise)


def _ber_exact(sinr, m):
    if m == 1:
        return qfunc(np.sqrt(sinr))
    if m == 2:
        p = {n: qfunc(np.sqrt(n * n / 5.0 * sinr)) for n in (1, 3, 5)}
        ber1 = 0.5 * p[1] + 0.5 * p[3]
        ber2 = 0.5 * (p[1] + p[3]) + 0.5 * (p[1] - p[5])
        return 0.5 * (ber1 + ber2)
    p = {n: qfunc(np.sqrt(n * n / 21.0 * sinr)) for n in (1, 3, 5, 7, 9, 11, 13)}
    ber1 = 0.25 * (p[1] + p[3] + p[5] + p[7])
    ber2 = 0.25 * ((p[3] - p[11]) + (p[1] - p[9]) + (p[1] + p[7]) + (p[3] + p[5]))
    ber3 = 0.25 * (
        (p[1] - p[5] + p[9] - p[13])
        + (p[1] + p[3] - p[7] + p[11])
        + (p[3] + p[1] - p[5] + p[9])
        + (p[1] - p[5] + p[3] - p[7])
    )
    return (ber1 + ber2 + ber3) / 3.0


def _ber_approx(sinr, m):
    M = 2 ** m
    return (2.0 / m) * (1.0 - 1.0 / M) * qfunc(np.sqrt(3.0 * sinr / (M * M - 1)))


def ber_from_sinr(sinr, scheme, mode="exact"):
    """Conditional BER of a Gray-mapped square QAM input.

    ``mode="exact"`` uses the per-bit decision-region expressions (exact on
    a Gaussian channel); ``mode="approx"`` keeps only the nearest-neighbour
    term. Infinite SINR maps to zero.
    """
    sinr = np.asarray(sinr, dtype=float)
    if np.any(sinr < 0):
        raise ValueError("SINR must be non-negative")
    finite = np.where(np.isinf(sinr), 0.0, sinr)
    if mode == "exact":
        out = _ber_exact(finite, scheme.m)
    elif mode == "approx":
        out = _ber_approx(finite, scheme.m)
    else:
        raise ValueError(f"mode must be 'exact' or 'approx', got {mode!r}")
    return np.where(np.isinf(sinr), 0.0, out)


def _per_input_ber(sinr, schemes, mode="exact"):
    sinr = np.asarray(sinr, dtype=float)
    out = np.empty_like(sinr)
    for j, scheme in enumerate(schemes):
        out[..., j] = ber_from_sinr(sinr[..., j], scheme, mode)
    return out


def aggregate_ber(ber, schemes):
    """Bit-weighted mean of per-input BER over the last axis."""
    w = np.array([s.bits_per_symbol for s in schemes], dtype=float)
    return np.asarray(ber) @ (w / w.sum())


def iber(dset, sigma2, schemes, mode="exact"):
    """Irreducible BER per input: the SINR with the noise term removed."""
    report = sinr_linear(dset, 0.0, sigma2)
    return _per_input_ber(report.sinr, schemes, mode)


def simo_mfb(realization, j, alpha_j, scheme, mode="exact"):
    """Matched-filter bound for input ``j`` on one realisation.

    ``SINR = sum_k sum_i |H_k[i, j]|^2 / (N alpha_j)``: MF output with all
    interference removed.
    """
    H = realization.H
    energy = np.sum(np.abs(H[:, :, j]) ** 2)
    with np.errstate(divide="ignore"):
        sinr = energy / (H.shape[0] * alpha_j) if alpha_j > 0 else np.inf
    return float(ber_from_sinr(sinr, scheme, mode))


def simo_awgn_mfb(scheme, n_rx, eta, ebn0_db, mode="exact"):
    """Closed-form SIMO/AWGN matched-filter bound, ``SINR = 2 eta m N_R Eb/N0``."""
    ebn0 = 10.0 ** (np.asarray(ebn0_db, dtype=float) / 10.0)
    return ber_from_sinr(2.0 * eta * scheme.m * n_rx * ebn0, scheme, mode)


def ensemble_realization(scenario, index, seed=None):
    """Realisation ``index`` of the scenario's channel ensemble."""
    seed = scenario.seed if seed is None else seed
    rng = substream(seed, STREAM_CHANNEL, index)
    return draw_rayleigh(scenario.profile, scenario.n_tx, scenario.n_rx, scenario.block_len, rng)


def _realization_sinrs(args):
    scenario, kinds, alphas, seed, index = args
    real = ensemble_realization(scenario, index, seed)
    gram = real.gram
    sigma2 = scenario.symbol_powers()
    out = np.empty((len(kinds), len(alphas), scenario.n_tx))
    for a, kind in enumerate(kinds):
        if kind is DetectorKind.MF:
            # MF does not depend on alpha: build once, vary the noise term only
            dset = build_detection_set(kind, gram=gram)
            base = sinr_linear(dset, 0.0, sigma2)
            for g, alpha in enumerate(alphas):
                out[a, g] = SinrReport(base.signal, base.isi, base.mui, alpha * dset.noise_gain).sinr
        else:
            for g, alpha in enumerate(alphas):
                dset = build_detection_set(kind, gram=gram, alpha=alpha)
                out[a, g] = sinr_linear(dset, alpha, sigma2).sinr
    return out


def _map_realizations(fn, jobs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [fn(j) for j in jobs]


def _noise_grid(scenario, ebn0_db):
    return [derive_noise(scenario, x).alpha for x in np.atleast_1d(ebn0_db)]


def _parse_kinds(kinds):
    single = isinstance(kinds, (str, DetectorKind))
    return single, [DetectorKind.parse(k) for k in ([kinds] if single else kinds)]


def ensemble_sinr(scenario, kinds, ebn0_db, n_realizations=200, seed=None, workers=1):
    """Conditional SINR for every realisation, kind, grid point and input.

    Returns an array of shape (n_realizations, n_kinds, n_points, n_tx).
    Realisation r is substream r of ``seed`` whatever the kind or grid, so
    all comparisons share the same channels.
    """
    _, kinds = _parse_kinds(kinds)
    if n_realizations < 1:
        raise ValueError("n_realizations must be at least 1")
    seed = scenario.seed if seed is None else int(seed)
    alphas = _noise_grid(scenario, ebn0_db)
    jobs = [(scenario, kinds, alphas, seed, r) for r in range(n_realizations)]
    return np.stack(_map_realizations(_realization_sinrs, jobs, workers))


def curves_from_sinr(samples, grid, kinds, scenario, seed, method="semi-analytical", mode="exact", schemes=None):
    """Turn :func:`ensemble_sinr` output into one BerCurve per kind."""
    schemes = scenario.schemes if schemes is None else tuple(schemes)
    ber = _per_input_ber(samples, schemes, mode)
    return [
        _curve_from_samples(method, grid, ber[:, a], schemes, seed, DetectorKind.parse(k).value)
        for a, k in enumerate(kinds)
    ]


def semi_analytical_ber(scenario, kinds, ebn0_db, n_realizations=200, seed=None, mode="exact", workers=1):
    """Average conditional BER over a channel ensemble.

    The same realisations (substreams ``0..n_realizations-1`` of ``seed``)
    are used for every grid point and every detector kind.

    Parameters
    ----------
    scenario : ScenarioConfig
    kinds : DetectorKind, str, or sequence of them
    ebn0_db : array_like
        Grid; ``inf`` gives the noiseless limit.

    Returns
    -------
    BerCurve or list of BerCurve
        One curve per kind (a single curve when a single kind was passed).
    """
    single, kinds = _parse_kinds(kinds)
    seed = scenario.seed if seed is None else int(seed)
    grid = np.atleast_1d(np.asarray(ebn0_db, dtype=float))
    samples = ensemble_sinr(scenario, kinds, grid, n_realizations, seed, workers)
    curves = curves_from_sinr(samples, grid, kinds, scenario, seed, mode=mode)
    return curves[0] if single else curves


def _curve_from_samples(method, x, samples, schemes, seed, label, x_name="ebn0_db"):
    # samples: (R, G, NT) conditional BER; averaged in realisation order
    R = samples.shape[0]
    ber = samples.mean(axis=0)
    agg_samples = aggregate_ber(samples, schemes)
    agg = agg_samples.mean(axis=0)
    se = agg_samples.std(axis=0, ddof=1) / np.sqrt(R) if R > 1 else np.zeros_like(agg)
    return BerCurve(
        method=method,
        x=np.asarray(x, dtype=float),
        ber=ber,
        aggregate=agg,
        stderr=se,
        n_realizations=np.full(len(x), R),
        seed=seed,
        label=label,
        x_name=x_name,
    )


def semi_analytical_iber(scenario, kinds, n_realizations=2000, seed=None, mode="exact", workers=1, schemes=None):
    """IBER (noiseless limit) averaged over the ensemble, one curve per kind.

    Curves hold a single point at ``x = inf``. ``schemes`` optionally
    evaluates the same SINR samples under other constellations; the
    noiseless SINR only depends on power ratios, so for a scenario with a
    common symbol power this equals rerunning with those constellations.
    """
    single, kinds = _parse_kinds(kinds)
    seed = scenario.seed if seed is None else int(seed)
    samples = ensemble_sinr(scenario, kinds, [np.inf], n_realizations, seed, workers)
    curves = curves_from_sinr(samples, np.array([np.inf]), kinds, scenario, seed, "iber", mode, schemes)
    return curves[0] if single else curves


def _mfb_samples(args):
    scenario, alphas, seed, index, mode = args
    real = ensemble_realization(scenario, index, seed)
    H = real.H
    energy = np.sum(np.abs(H) ** 2, axis=(0, 1)) / H.shape[0]  # (NT,)
    out = np.empty((len(alphas), scenario.n_tx))
    for g, alpha in enumerate(alphas):
        with np.errstate(divide="ignore"):
            sinr = np.where(alpha > 0, energy / np.where(alpha > 0, alpha, 1.0), np.inf)
        out[g] = _per_input_ber(sinr, scenario.schemes, mode)
    return out


def simo_mfb_curve(scenario, ebn0_db, n_realizations=200, seed=None, mode="exact", workers=1):
    """Ensemble-averaged SIMO matched-filter bound on the scenario's channel."""
    seed = scenario.seed if seed is None else int(seed)
    grid = np.atleast_1d(np.asarray(ebn0_db, dtype=float))
    alphas = _noise_grid(scenario, grid)
    jobs = [(scenario, alphas, seed, r, mode) for r in range(n_realizations)]
    per = np.stack(_map_realizations(_mfb_samples, jobs, workers))
    return _curve_from_samples("bound", grid, per, scenario.schemes, seed, "SIMO_MFB")


def ebn0_for_ber(ber_fn, target, lo=-30.0, hi=40.0, xtol=1e-4):
    """Eb/N0 (dB) where a non-increasing ``ber_fn`` crosses ``target``.

    Root found on ``log(ber) - log(target)`` with Brent's method.
    """
    def f(x):
        return np.log(max(float(ber_fn(x)), 1e-300)) - np.log(target)

    flo, fhi = f(lo), f(hi)
    if flo < 0 or fhi > 0:
        raise ValueError(f"target BER {target} not bracketed in [{lo}, {hi}] dB")
    return brentq(f, lo, hi, xtol=xtol)
