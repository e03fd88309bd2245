"""Frequency-domain linear detection and the iterative DF receiver.

Every detector has the form ``D_k = B_k H_k^H`` per subchannel k:

* MF: ``B_k = I``
* exact MMSE: ``B_k = A_k^{-1}`` with ``A_k = G_k + diag(alpha)``
* simplified MMSE: first-order approximation of ``A_k^{-1}`` built from
  the diagonal of ``A_k`` only, so no matrix inversion is needed

``G_k = H_k^H H_k`` and ``Gamma_k = D_k H_k = B_k G_k``. The signal gain of
input j is ``gamma_j = mean_k Gamma_k[j, j]``. Channel knowledge is
perfect throughout (the estimate equals the true channel).
"""
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np

from .modem import slice_symbols
from .numerics import dft, hermitian_transpose, idft, invert_hermitian

__all__ = [
    "DetectorKind",
    "DetectionMatrixSet",
    "DfSchedule",
    "DegenerateGainError",
    "build_B",
    "build_detection_set",
    "linear_detect",
    "time_domain_outputs",
    "hard_decisions",
    "iterative_df_detect",
]


class DetectorKind(str, Enum):
    MF = "MF"
    EXACT_MMSE = "ExactMMSE"
    SIMPLIFIED_MMSE = "SimplifiedMMSE"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {
            "mf": cls.MF,
            "exactmmse": cls.EXACT_MMSE,
            "mmse": cls.EXACT_MMSE,
            "simplifiedmmse": cls.SIMPLIFIED_MMSE,
            "smmse": cls.SIMPLIFIED_MMSE,
        }
        key = str(value).replace("_", "").replace("-", "").lower()
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown detector kind {value!r}") from None

    @property
    def inversion_free(self):
        return self is not DetectorKind.EXACT_MMSE


class DegenerateGainError(ValueError):
    """Signal gain of some input is numerically zero, so decisions are undefined."""


def build_B(kind, gram, alpha):
    """The ``N_T x N_T`` matrix ``B_k`` for each subchannel.

    Parameters
    ----------
    kind : DetectorKind or str
    gram : ndarray, shape (..., n_tx, n_tx)
        ``G_k`` stack.
    alpha : array_like, shape (n_tx,)
        Diagonal of the regularisation matrix; ignored by MF.
    """
    kind = DetectorKind.parse(kind)
    gram = np.asarray(gram, dtype=np.complex128)
    n = gram.shape[-1]
    if kind is DetectorKind.MF:
        return np.broadcast_to(np.eye(n, dtype=np.complex128), gram.shape).copy()
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (n,))
    if np.any(alpha < 0):
        raise ValueError("alpha must be non-negative")
    idx = np.arange(n)
    a = gram.copy()
    a[..., idx, idx] += alpha
    if kind is DetectorKind.EXACT_MMSE:
        return invert_hermitian(a)
    d_inv = 1.0 / a[..., idx, idx].real
    off = a.copy()
    off[..., idx, idx] = 0.0
    # diag(A)^-1 [I - (A - diag A) diag(A)^-1]
    inner = np.eye(n) - off * d_inv[..., None, :]
    return d_inv[..., :, None] * inner


@dataclass(frozen=True, eq=False)
class DetectionMatrixSet:
    """Detector for one channel realisation.

    ``B`` and ``Gamma`` have shape (N, n_tx, n_tx); ``gamma`` has shape
    (n_tx,). ``H`` is kept so the detection matrices ``D`` can be formed
    when received samples need to be processed.
    """

    kind: DetectorKind
    B: np.ndarray
    Gamma: np.ndarray
    gamma: np.ndarray
    H: np.ndarray = None

    @property
    def block_len(self):
        return self.Gamma.shape[0]

    @property
    def n_tx(self):
        return self.Gamma.shape[-1]

    @cached_property
    def D(self):
        if self.H is None:
            raise ValueError("detection set was built from Gram matrices only")
        hh = hermitian_transpose(self.H)
        if self.kind is DetectorKind.MF:
            return hh
        return self.B @ hh

    @cached_property
    def noise_gain(self):
        """``sum_k sum_i |D_k[j, i]|^2`` per input, i.e. ``sum_k (B G B^H)_jj``."""
        if self.kind is DetectorKind.MF:
            return np.einsum("kjj->j", self.Gamma).real
        return np.einsum("kja,kja->j", self.Gamma, np.conj(self.B)).real


def build_detection_set(kind, realization=None, alpha=0.0, gram=None):
    """Build ``D_k``, ``Gamma_k`` and ``gamma`` for a realisation.

    Either ``realization`` (a :class:`~scfde_mimo.channel.ChannelRealization`)
    or a precomputed ``gram`` stack must be given.
    """
    kind = DetectorKind.parse(kind)
    if gram is None:
        if realization is None:
            raise ValueError("need a realization or a gram stack")
        gram = realization.gram
    H = None if realization is None else realization.H
    B = build_B(kind, gram, alpha)
    Gamma = gram.copy() if kind is DetectorKind.MF else B @ gram
    n = Gamma.shape[-1]
    gamma = Gamma[:, np.arange(n), np.arange(n)].mean(axis=0)
    return DetectionMatrixSet(kind, B, Gamma, gamma, H)


def linear_detect(dset, Y):
    """Frequency-domain outputs ``Ytilde_k = D_k Y_k``.

    ``Y`` has shape (N, n_rx); the result has shape (N, n_tx).
    """
    Y = np.asarray(Y, dtype=np.complex128)
    return np.einsum("kji,ki->kj", dset.D, Y)


def time_domain_outputs(Yt):
    """IDFT of each input's frequency-domain output: (N, n_tx) -> (n_tx, N)."""
    return idft(np.asarray(Yt).T, axis=-1)


def _check_gain(gamma, scale):
    bad = np.flatnonzero(np.abs(gamma) < 1e-12 * scale)
    if bad.size:
        raise DegenerateGainError(f"signal gain vanishes for input(s) {bad.tolist()}")


def hard_decisions(y, gamma, schemes, amplitudes=None):
    """Slice ``y_j / (gamma_j a_j)`` onto each input's unit lattice.

    ``y`` has shape (n_tx, N); returns lattice points of the same shape.
    """
    n_tx = y.shape[0]
    amp = np.ones(n_tx) if amplitudes is None else np.asarray(amplitudes, dtype=float)
    z = y / (np.asarray(gamma)[:, None] * amp[:, None])
    out = np.empty_like(z)
    for scheme in set(schemes):
        rows = [j for j in range(n_tx) if schemes[j] == scheme]
        out[rows] = slice_symbols(z[rows], scheme)
    return out


@dataclass(frozen=True)
class DfSchedule:
    """Detector kinds used by the DF receiver.

    ``first`` is used at iteration 1 and ``rest`` at every later iteration,
    which must avoid matrix inversion (MF or simplified MMSE).
    """

    first: DetectorKind = DetectorKind.SIMPLIFIED_MMSE
    rest: DetectorKind = DetectorKind.MF
    iterations: int = 4

    def __post_init__(self):
        object.__setattr__(self, "first", DetectorKind.parse(self.first))
        object.__setattr__(self, "rest", DetectorKind.parse(self.rest))
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if self.iterations > 1 and not self.rest.inversion_free:
            raise ValueError("iterations after the first must use MF or SimplifiedMMSE")

    @classmethod
    def linear(cls, kind):
        kind = DetectorKind.parse(kind)
        return cls(kind, DetectorKind.MF, 1)

    def kind_at(self, p):
        return self.first if p == 1 else self.rest

    @property
    def label(self):
        if self.iterations == 1:
            return self.first.value
        return f"DF_{self.first.value}_then_{self.rest.value}_P{self.iterations}"


def iterative_df_detect(schedule, realization, alpha, Y, schemes, amplitudes=None, sets=None):
    """Run the DF receiver on one received block.

    At iteration p > 1 the output of the linear detector is corrected by
    ``(gamma - Gamma_k) S_hat_k``, with ``S_hat`` the DFT of the previous
    iteration's decisions, before IDFT, gain normalisation and slicing.

    Parameters
    ----------
    schedule : DfSchedule
    realization : ChannelRealization
    alpha : array_like
        Regularisation used by the MMSE-type detectors, held fixed across
        iterations.
    Y : ndarray, shape (N, n_rx)
    schemes : sequence of QamScheme, one per input
    amplitudes : array_like, optional
        Lattice scale of each input; decisions are made on the unit lattice.
    sets : dict, optional
        Cache of :class:`DetectionMatrixSet` keyed by kind, reused across
        blocks on the same realisation.

    Returns
    -------
    ndarray, shape (P, n_tx, N)
        Unit-lattice decisions for every iteration.
    """
    n_tx = realization.n_tx
    amp = np.ones(n_tx) if amplitudes is None else np.asarray(amplitudes, dtype=float)
    sets = {} if sets is None else sets
    scale = realization.n_rx * realization.p_sigma
    decisions = []
    S_hat = None
    for p in range(1, schedule.iterations + 1):
        kind = schedule.kind_at(p)
        if kind not in sets:
            sets[kind] = build_detection_set(kind, realization, alpha)
        dset = sets[kind]
        _check_gain(dset.gamma, scale)
        Yt = linear_detect(dset, Y)
        if S_hat is not None:
            Yt = Yt + dset.gamma * S_hat - np.einsum("kjl,kl->kj", dset.Gamma, S_hat)
        y = time_domain_outputs(Yt)
        dec = hard_decisions(y, dset.gamma, schemes, amp)
        decisions.append(dec)
        S_hat = dft(dec * amp[:, None], axis=-1).T
    return np.stack(decisions)
