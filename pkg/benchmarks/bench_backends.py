"""Compare the compiled kernel core against the numpy fallback.

Run: python benchmarks/bench_backends.py [sizes...]
"""

import sys
import time

import numpy as np

from dro_lab import _numpykernels
from dro_lab import backend

try:
    from dro_lab import _fastkernels
except ImportError:
    _fastkernels = None


def bench(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    sizes = [int(s) for s in sys.argv[1:]] or [100, 400, 1000, 2000]
    d = 5
    rng = np.random.default_rng(0)
    print(f"active backend: {backend.BACKEND}")
    if _fastkernels is None:
        print("compiled extension not available; showing numpy fallback only")
    header = f"{'n':>6} {'gram numpy':>12} {'gram compiled':>14} {'dists numpy':>12} {'dists compiled':>15}"
    print(header)
    for n in sizes:
        X = rng.random((n, d))
        t_gn = bench(_numpykernels.gaussian_gram, X, X, 1.0)
        t_dn = bench(_numpykernels.pairwise_dists_condensed, X)
        if _fastkernels is not None:
            t_gc = bench(_fastkernels.gaussian_gram, X, X, 1.0)
            t_dc = bench(_fastkernels.pairwise_dists_condensed, X)
            # sanity: both backends agree
            a = _numpykernels.gaussian_gram(X, X, 1.0)
            b = np.asarray(_fastkernels.gaussian_gram(X, X, 1.0))
            assert np.allclose(a, b, atol=1e-12), "backend mismatch"
            print(f"{n:>6} {t_gn:>12.6f} {t_gc:>14.6f} {t_dn:>12.6f} {t_dc:>15.6f}")
        else:
            print(f"{n:>6} {t_gn:>12.6f} {'-':>14} {t_dn:>12.6f} {'-':>15}")


if __name__ == "__main__":
    main()
