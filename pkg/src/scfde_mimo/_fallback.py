"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Same signatures and return conventions, vectorised over the batch axis
instead of looping in C.
"""
import numpy as np


def fft_rows(x, rev, tw, inverse=False):
    nb, n = x.shape
    out = np.ascontiguousarray(x[:, rev], dtype=np.complex128)
    w = np.conj(tw) if inverse else tw
    size = 2
    while size <= n:
        half = size // 2
        blocks = out.reshape(nb, n // size, size)
        u = blocks[..., :half]
        t = blocks[..., half:] * w[:: n // size][:half]
        out = np.concatenate((u + t, u - t), axis=-1).reshape(nb, n)
        size *= 2
    if inverse:
        out /= n
    return out


def inv_hermitian_batch(a):
    a = np.asarray(a, dtype=np.complex128)
    nb, n, _ = a.shape
    L = np.zeros_like(a)
    failed = np.zeros(nb, dtype=bool)
    for j in range(n):
        d = a[:, j, j].real - np.sum(np.abs(L[:, j, :j]) ** 2, axis=-1)
        failed |= ~(d > 0.0) | ~np.isfinite(d)
        d = np.where(failed, 1.0, d)
        ljj = np.sqrt(d)
        L[:, j, j] = ljj
        if j + 1 < n:
            s = a[:, j + 1:, j] - np.einsum("bik,bk->bi", L[:, j + 1:, :j], np.conj(L[:, j, :j]))
            L[:, j + 1:, j] = s / ljj[:, None]

    if failed.any():
        return np.zeros_like(a), int(np.flatnonzero(failed)[0])

    Li = np.zeros_like(a)
    diag = L[:, np.arange(n), np.arange(n)].real
    for i in range(n):
        Li[:, i, i] = 1.0 / diag[:, i]
        if i:
            s = np.einsum("bk,bkj->bj", L[:, i, :i], Li[:, :i, :i])
            Li[:, i, :i] = -s / diag[:, i, None]

    out = np.conj(np.swapaxes(Li, 1, 2)) @ Li
    out = 0.5 * (out + np.conj(np.swapaxes(out, 1, 2)))
    return out, -1
