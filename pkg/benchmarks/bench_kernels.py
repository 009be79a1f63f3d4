"""Time the numba kernels against their pure-numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-N wall time for each kernel and path, and checks that
both paths agree before timing.
"""

import argparse
import time

import numpy as np

from specfid import _kernels
from specfid.quant import E2M1_MAGNITUDES
from specfid.tensorio import RandomStream


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_quantize(repeat):
    cases = [("nvfp4 512x512", (512, 512), 16, E2M1_MAGNITUDES, False),
             ("mxfp4 512x4096", (512, 4096), 32, E2M1_MAGNITUDES, True),
             ("int4 global 512x512", (1, 512 * 512), 512 * 512, np.arange(8.0), False)]
    for name, shape, block, grid, pow2 in cases:
        a = RandomStream(0).normal(shape)
        qn, _ = _kernels.grid_quantize(a, block, grid, pow2=pow2, use_numba=False)
        qj, _ = _kernels.grid_quantize(a, block, grid, pow2=pow2, use_numba=True)  # also compiles
        assert np.array_equal(qn, qj), name
        tn = best_of(lambda: _kernels.grid_quantize(a, block, grid, pow2=pow2, use_numba=False), repeat)
        tj = best_of(lambda: _kernels.grid_quantize(a, block, grid, pow2=pow2, use_numba=True), repeat)
        print(f"grid_quantize  {name:22s} numpy {tn * 1e3:8.2f} ms  numba {tj * 1e3:8.2f} ms  x{tn / tj:5.1f}")


def bench_jacobi(repeat):
    for n in (32, 64, 128):
        a = RandomStream(1).normal((n, n))
        sn = _kernels.jacobi_singular_values(a, use_numba=False)
        sj = _kernels.jacobi_singular_values(a, use_numba=True)
        assert np.allclose(sn, sj, rtol=1e-10)
        tn = best_of(lambda: _kernels.jacobi_singular_values(a, use_numba=False), repeat)
        tj = best_of(lambda: _kernels.jacobi_singular_values(a, use_numba=True), repeat)
        tl = best_of(lambda: np.linalg.svd(a, compute_uv=False), repeat)
        print(f"jacobi         {n:4d}x{n:<4d}              numpy {tn * 1e3:8.2f} ms  numba {tj * 1e3:8.2f} ms  "
              f"x{tn / tj:5.1f}  (LAPACK {tl * 1e3:.2f} ms)")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    bench_quantize(args.repeat)
    bench_jacobi(args.repeat)


if __name__ == "__main__":
    main()
