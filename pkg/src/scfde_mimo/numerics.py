"""Complex vector/matrix primitives: DFT/IDFT and Hermitian inversion.

Transform convention is unnormalised forward, 1/N inverse::

    dft(s)[k]  = sum_n s[n] exp(-2j*pi*k*n/N)
    idft(S)[n] = (1/N) sum_k S[k] exp(+2j*pi*k*n/N)

Power-of-two lengths use a radix-2 kernel with cached twiddles; any other
length goes through a direct O(N^2) transform. The kernels come from the
compiled ``_kernels`` extension when it is importable and from the numpy
``_fallback`` module otherwise. Set ``SCFDE_PURE_PYTHON=1`` to force the
fallback.
"""
import os
from functools import lru_cache

import numpy as np

from . import _fallback

if os.environ.get("SCFDE_PURE_PYTHON", "") not in ("", "0"):
    _backend = _fallback
    BACKEND = "numpy"
else:
    try:
        from . import _kernels as _backend

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _backend = _fallback
        BACKEND = "numpy"

__all__ = [
    "BACKEND",
    "SingularMatrixError",
    "dft",
    "idft",
    "hermitian_transpose",
    "invert_hermitian",
    "is_power_of_two",
]


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a matrix handed to :func:`invert_hermitian` is not PD.

    ``index`` is the position of the offending matrix in the batch, which
    is the subchannel index when the batch is a per-subchannel stack.
    """

    def __init__(self, index):
        self.index = int(index)
        super().__init__(f"matrix is not Hermitian positive definite at subchannel {self.index}")


def is_power_of_two(n):
    return n > 0 and (n & (n - 1)) == 0


@lru_cache(maxsize=32)
def _radix2_tables(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    tw = np.exp(-2j * np.pi * np.arange(n // 2) / n)
    rev.setflags(write=False)
    tw.setflags(write=False)
    return rev, tw


@lru_cache(maxsize=8)
def _dft_matrix(n):
    k = np.arange(n)
    m = np.exp(-2j * np.pi * np.outer(k, k) / n)
    m.setflags(write=False)
    return m


def _transform(x, axis, inverse):
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim == 0 or x.shape[axis] == 0:
        raise ValueError("transform needs a non-empty vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite value in transform input")
    moved = np.moveaxis(x, axis, -1)
    shape = moved.shape
    n = shape[-1]
    rows = np.ascontiguousarray(moved.reshape(-1, n))
    if n == 1:
        out = rows.copy()
    elif is_power_of_two(n):
        rev, tw = _radix2_tables(n)
        out = _backend.fft_rows(rows, rev, np.ascontiguousarray(tw), bool(inverse))
    else:
        mat = _dft_matrix(n)
        out = rows @ (np.conj(mat) / n if inverse else mat)
    return np.moveaxis(np.asarray(out).reshape(shape), -1, axis)


def dft(x, axis=-1):
    """Unnormalised forward DFT along ``axis``."""
    return _transform(x, axis, inverse=False)


def idft(x, axis=-1):
    """Inverse of :func:`dft`, including the 1/N factor."""
    return _transform(x, axis, inverse=True)


def hermitian_transpose(m):
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(np.asarray(m), -1, -2))


def invert_hermitian(m):
    """Invert a Hermitian positive-definite matrix, or a stack of them.

    Parameters
    ----------
    m : array_like, shape (..., n, n)
        Only the lower triangle is read.

    Returns
    -------
    ndarray
        Inverses, same shape as ``m``, exactly Hermitian.

    Raises
    ------
    SingularMatrixError
        If a Cholesky pivot is not strictly positive. ``index`` names the
        first failing matrix in the flattened batch.
    """
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("non-finite value in matrix")
    shape = m.shape
    batch = np.ascontiguousarray(m.reshape(-1, shape[-1], shape[-1]))
    out, bad = _backend.inv_hermitian_batch(batch)
    if bad >= 0:
        raise SingularMatrixError(bad)
    return np.asarray(out).reshape(shape)
