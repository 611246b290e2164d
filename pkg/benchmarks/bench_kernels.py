"""Benchmark the compiled kernels against the pure-numpy fallback.

Run:  python benchmarks/bench_kernels.py
The fallback is selected with GRAM_NO_EXT=1 inside the same process by
calling the reference module directly, so one run prints both columns.
"""

import time

import numpy as np

from gram import _kernels
from gram._kernels import reference

try:
    from gram._kernels import _cykernels
except ImportError:
    _cykernels = None


def timeit(fn, *args, repeats=5, **kwargs):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args, **kwargs)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_place_taps():
    rng = np.random.default_rng(0)
    n_images = 40000
    delays = rng.uniform(0, 20000, n_images)
    amps = rng.standard_normal(n_images)
    out_len = 21000
    rows = []
    ref = timeit(lambda: reference.place_taps(np.zeros(out_len), delays, amps))
    rows.append(("python", ref))
    if _cykernels is not None:
        cy = timeit(lambda: _cykernels.place_taps(np.zeros(out_len), delays, amps))
        rows.append(("cython", cy))
    return "place_taps (40k images x 33 taps)", rows


def bench_scan():
    rng = np.random.default_rng(1)
    b, t, d, n = 16, 201, 128, 16
    u = rng.standard_normal((b, t, d))
    delta = rng.uniform(0.01, 0.5, (b, t, d))
    A = -rng.uniform(0.2, 2.0, (d, n))
    B = rng.standard_normal((b, t, n))
    C = rng.standard_normal((b, t, n))
    rows = [("python", timeit(reference.selective_scan_fwd, u, delta, A, B, C, False,
                              repeats=3))]
    if _cykernels is not None:
        rows.append(("cython", timeit(_cykernels.selective_scan_fwd, u, delta, A, B, C,
                                      False, repeats=3)))
    return "selective_scan_fwd (16x201x128, state 16)", rows


def bench_scan_bwd():
    rng = np.random.default_rng(2)
    b, t, d, n = 16, 201, 128, 16
    u = rng.standard_normal((b, t, d))
    delta = rng.uniform(0.01, 0.5, (b, t, d))
    A = -rng.uniform(0.2, 2.0, (d, n))
    B = rng.standard_normal((b, t, n))
    C = rng.standard_normal((b, t, n))
    y, hs = reference.selective_scan_fwd(u, delta, A, B, C, False)
    dy = rng.standard_normal(y.shape)
    rows = [("python", timeit(reference.selective_scan_bwd, dy, u, delta, A, B, C, hs,
                              False, repeats=3))]
    if _cykernels is not None:
        rows.append(("cython", timeit(_cykernels.selective_scan_bwd, dy, u, delta, A,
                                      B, C, hs, False, repeats=3)))
    return "selective_scan_bwd (same shapes)", rows


def main():
    print(f"active backend: {_kernels.backend_name()}")
    for bench in (bench_place_taps, bench_scan, bench_scan_bwd):
        title, rows = bench()
        print(f"\n{title}")
        base = rows[0][1]
        for name, seconds in rows:
            speedup = base / seconds
            print(f"  {name:<8} {seconds * 1e3:9.2f} ms   ({speedup:5.1f}x)")


if __name__ == "__main__":
    main()
