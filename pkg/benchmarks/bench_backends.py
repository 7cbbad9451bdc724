"""Time the numba kernels against their pure-NumPy fallbacks.

Run as ``python benchmarks/bench_backends.py``. Both implementations are
imported directly, so the TRIPLETWB_NO_NUMBA environment flag is not
needed here (it selects the backend for library users at import time).
"""
import time

import numpy as np

from tripletwb._backend import HAVE_NUMBA, backend_name
from tripletwb._kernels import (laguerre_kernel_numba, laguerre_kernel_numpy,
                                pixel_mc_clicks_numba, pixel_mc_clicks_numpy)


def timeit(fn, *args, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_pixel_mc():
    print("\npixel_mc_clicks: multiplexed-detector Monte Carlo")
    print(f"{'case':<34}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for n, pixels, eta, d, frames in (
            (3, 16384, 0.22, 1e-4, 200_000),
            (12, 16384, 0.22, 1e-4, 200_000),
            (30, 442368, 0.23, 2.4e-5, 100_000)):
        case = f"n={n} N={pixels} frames={frames}"
        t_np, out_np = timeit(pixel_mc_clicks_numpy, n, pixels, eta, d,
                              frames, 42)
        if HAVE_NUMBA:
            pixel_mc_clicks_numba(n, pixels, eta, d, 10, 42)  # compile
            t_nb, out_nb = timeit(pixel_mc_clicks_numba, n, pixels, eta, d,
                                  frames, 42)
            # different RNG streams: compare the means, not the samples
            assert abs(out_np.mean() - out_nb.mean()) < 0.05 * max(
                out_np.mean(), 1.0)
            print(f"{case:<34}{t_np:>11.3f}s{t_nb:>11.3f}s"
                  f"{t_np / t_nb:>9.1f}x")
        else:
            print(f"{case:<34}{t_np:>11.3f}s{'n/a':>12}{'':>10}")


def bench_laguerre():
    print("\nlaguerre_kernel: s-ordered quasi-distribution synthesis")
    print(f"{'case':<34}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for points, n_max, s, M in (
            (400, 20, 0.0, 1.0),
            (20_000, 20, 0.05, 1.0),
            (20_000, 60, -0.5, 2.0)):
        w = (np.arange(points) + 0.5) * (80.0 / points)
        case = f"points={points} n_max={n_max} s={s}"
        t_np, out_np = timeit(laguerre_kernel_numpy, w, n_max, s, M)
        if HAVE_NUMBA:
            laguerre_kernel_numba(w[:8], n_max, s, M)  # compile
            t_nb, out_nb = timeit(laguerre_kernel_numba, w, n_max, s, M)
            np.testing.assert_allclose(out_nb, out_np, rtol=1e-12,
                                       atol=1e-300)
            print(f"{case:<34}{t_np * 1e3:>10.2f}ms{t_nb * 1e3:>10.2f}ms"
                  f"{t_np / t_nb:>9.1f}x")
        else:
            print(f"{case:<34}{t_np * 1e3:>10.2f}ms{'n/a':>12}{'':>10}")


if __name__ == "__main__":
    print(f"active backend: {backend_name()}"
          + ("" if HAVE_NUMBA else "  (numba unavailable or disabled)"))
    bench_pixel_mc()
    bench_laguerre()
