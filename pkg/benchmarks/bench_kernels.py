"""Compare the compiled kernels with the numpy fallback (and numpy/LAPACK).

Run with ``python benchmarks/bench_kernels.py [--repeat R]``. Shapes match
the simulator's hot paths: a 24x120 realisation needs 2880 length-256
transforms, and each MMSE detector inverts 256 Gram-sized matrices.
"""
import argparse
import timeit

import numpy as np

from scfde_mimo import _fallback, numerics

try:
    from scfde_mimo import _kernels
except ImportError:  # extension not built
    _kernels = None


def _best(fn, repeat):
    fn()  # warm caches
    return min(timeit.repeat(fn, number=1, repeat=repeat)) * 1e3


def bench_fft(rows, n, repeat):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((rows, n)) + 1j * rng.standard_normal((rows, n))
    rev, tw = numerics._radix2_tables(n)
    out = {"numpy.fft (reference)": _best(lambda: np.fft.fft(x), repeat),
           "fallback": _best(lambda: _fallback.fft_rows(x, rev, tw, False), repeat)}
    if _kernels is not None:
        out["cython"] = _best(lambda: _kernels.fft_rows(x, rev, tw, False), repeat)
    return out


def bench_inverse(batch, n, repeat):
    rng = np.random.default_rng(1)
    h = rng.standard_normal((batch, 5 * n, n)) + 1j * rng.standard_normal((batch, 5 * n, n))
    a = np.conj(np.swapaxes(h, 1, 2)) @ h
    out = {"numpy.linalg.inv (reference)": _best(lambda: np.linalg.inv(a), repeat),
           "fallback": _best(lambda: _fallback.inv_hermitian_batch(a), repeat)}
    if _kernels is not None:
        out["cython"] = _best(lambda: _kernels.inv_hermitian_batch(a), repeat)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    args = ap.parse_args(argv)
    print(f"active backend: {numerics.BACKEND}")
    cases = [
        ("FFT 2880 x 256", bench_fft(2880, 256, args.repeat)),
        ("FFT 64 x 1024", bench_fft(64, 1024, args.repeat)),
        ("Hermitian inverse 256 x 12x12", bench_inverse(256, 12, args.repeat)),
        ("Hermitian inverse 256 x 24x24", bench_inverse(256, 24, args.repeat)),
    ]
    for title, res in cases:
        print(f"\n{title}")
        base = res["fallback"]
        for name, ms in res.items():
            print(f"  {name:30s} {ms:9.3f} ms   x{base / ms:5.2f} vs fallback")


if __name__ == "__main__":
    main()
