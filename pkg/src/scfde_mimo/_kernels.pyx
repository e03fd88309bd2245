# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: batched radix-2 FFT and batched Hermitian PD inversion.

Both functions mirror the pure-numpy versions in ``_fallback`` exactly in
their contracts; ``numerics`` picks one of the two at import.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, isfinite

cnp.import_array()

ctypedef double complex cplx


def fft_rows(x not None,
             rev not None,
             tw not None,
             bint inverse=False):
    """Radix-2 DIT transform of every row of a C-contiguous 2-D array.

    ``rev`` is the bit-reversal permutation and ``tw`` holds
    exp(-2j*pi*k/n) for k < n/2. Returns a new array; the inverse
    includes the 1/n factor.
    """
    cdef Py_ssize_t nb = x.shape[0]
    cdef Py_ssize_t n = x.shape[1]
    cdef cnp.ndarray[cplx, ndim=2] out = np.empty((nb, n), dtype=np.complex128)
    cdef cplx[:, ::1] o = out
    cdef const cplx[:, :] xi = x
    cdef const cnp.intp_t[::1] r = rev
    cdef const cplx[::1] w = tw
    cdef double[:, ::1] v
    cdef Py_ssize_t b, i, size, half, step, k, p, q
    cdef double wr, wi, tr, ti, ur, ui
    cdef double scale = 1.0 / n

    for b in range(nb):
        for i in range(n):
            o[b, i] = xi[b, r[i]]
    v = out.view(np.float64)

    with nogil:
        for b in range(nb):
            size = 2
            while size <= n:
                half = size // 2
                step = n // size
                for k in range(half):
                    wr = w[k * step].real
                    wi = -w[k * step].imag if inverse else w[k * step].imag
                    p = 2 * k
                    while p < 2 * n:
                        q = p + size
                        tr = wr * v[b, q] - wi * v[b, q + 1]
                        ti = wr * v[b, q + 1] + wi * v[b, q]
                        ur = v[b, p]
                        ui = v[b, p + 1]
                        v[b, p] = ur + tr
                        v[b, p + 1] = ui + ti
                        v[b, q] = ur - tr
                        v[b, q + 1] = ui - ti
                        p += 2 * size
                size *= 2
            if inverse:
                for i in range(2 * n):
                    v[b, i] = v[b, i] * scale
    return out


def inv_hermitian_batch(a not None):
    """Invert a stack of Hermitian positive-definite matrices by Cholesky.

    Returns ``(inverse, bad)`` where ``bad`` is the index of the first
    matrix with a non-positive pivot, or -1.
    """
    cdef Py_ssize_t nb = a.shape[0]
    cdef Py_ssize_t n = a.shape[1]
    cdef cnp.ndarray[cplx, ndim=3] out = np.zeros((nb, n, n), dtype=np.complex128)
    cdef cplx[:, :, ::1] o = out
    cdef const cplx[:, :, :] av = a
    cdef cnp.ndarray[cplx, ndim=2] lbuf = np.zeros((n, n), dtype=np.complex128)
    cdef cnp.ndarray[cplx, ndim=2] ibuf = np.zeros((n, n), dtype=np.complex128)
    cdef cplx[:, ::1] L = lbuf
    cdef cplx[:, ::1] Li = ibuf
    cdef Py_ssize_t b, i, j, k
    cdef double d
    cdef cplx s
    cdef Py_ssize_t bad = -1

    with nogil:
        for b in range(nb):
            # A = L L^H
            for j in range(n):
                d = av[b, j, j].real
                for k in range(j):
                    d = d - (L[j, k].real * L[j, k].real + L[j, k].imag * L[j, k].imag)
                if not (d > 0.0) or not isfinite(d):
                    bad = b
                    break
                L[j, j] = sqrt(d)
                for i in range(j + 1, n):
                    s = av[b, i, j]
                    for k in range(j):
                        s = s - L[i, k] * L[j, k].conjugate()
                    L[i, j] = s / L[j, j].real
            if bad >= 0:
                break
            # L^{-1}, lower triangular
            for j in range(n):
                Li[j, j] = 1.0 / L[j, j].real
                for i in range(j + 1, n):
                    s = 0.0
                    for k in range(j, i):
                        s = s + L[i, k] * Li[k, j]
                    Li[i, j] = -s / L[i, i].real
                for i in range(j):
                    Li[i, j] = 0.0
            # A^{-1} = L^{-H} L^{-1}
            for i in range(n):
                for j in range(i + 1):
                    s = 0.0
                    for k in range(i, n):
                        s = s + Li[k, i].conjugate() * Li[k, j]
                    o[b, i, j] = s
                    o[b, j, i] = s.conjugate()
                o[b, i, i] = o[b, i, i].real
    return out, bad
