"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports and ``SPECFID_NUMBA`` is not
``"0"``. The quantization paths are bit-identical and the Jacobi paths agree
to rounding; ``tests/test_kernels.py`` checks both and
``benchmarks/bench_kernels.py`` times them against each other.
"""

import math
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("SPECFID_NUMBA", "1") != "0"


def pow2_ceil(x):
    """Smallest power of two >= x, elementwise; zeros stay zero."""
    x = np.asarray(x, dtype=np.float64)
    frac, exp = np.frexp(x)
    # frexp gives x = frac * 2**exp with frac in [0.5, 1); frac == 0.5 is already a power of two
    exp = exp - (frac == 0.5)
    return np.where(x > 0, np.ldexp(1.0, exp), 0.0)


# ---------------------------------------------------------------------------
# block-wise nearest-grid quantization
# ---------------------------------------------------------------------------


def _grid_quantize_numpy(a, block, grid, half_even, pow2, scales, has_scales):
    m, n = a.shape
    nb = -(-n // block)
    padded = np.zeros((m, nb * block))
    padded[:, :n] = a
    blocks = padded.reshape(m, nb, block)
    top = grid[-1]
    if has_scales:
        sc = scales.astype(np.float64, copy=True)
    else:
        amax = np.abs(blocks).max(axis=2)
        sc = amax / top
        if pow2:
            sc = pow2_ceil(sc)
    safe = np.where(sc > 0, sc, 1.0)[:, :, None]
    t = np.abs(blocks) / safe
    mids = 0.5 * (grid[1:] + grid[:-1])
    if half_even:
        idx = np.searchsorted(mids, t, side="left")
        on_mid = (idx < mids.size) & (t == mids[np.minimum(idx, mids.size - 1)])
        idx = np.where(on_mid & (idx % 2 == 1), idx + 1, idx)
    else:
        idx = np.searchsorted(mids, t, side="right")
    mag = grid[idx] * np.where(sc > 0, sc, 0.0)[:, :, None]
    q = np.copysign(mag, blocks).reshape(m, nb * block)[:, :n]
    return np.ascontiguousarray(q), sc


def _grid_quantize_loops(a, block, grid, half_even, pow2, scales, has_scales):
    m, n = a.shape
    nb = (n + block - 1) // block
    ng = grid.size
    top = grid[ng - 1]
    mids = np.empty(ng - 1)
    for i in range(ng - 1):
        mids[i] = 0.5 * (grid[i] + grid[i + 1])
    q = np.empty((m, n))
    sc_out = np.empty((m, nb))
    for i in range(m):
        for b in range(nb):
            lo = b * block
            hi = min(lo + block, n)
            if has_scales:
                sc = scales[i, b]
            else:
                amax = 0.0
                for j in range(lo, hi):
                    v = abs(a[i, j])
                    if v > amax:
                        amax = v
                sc = amax / top
                if pow2 and sc > 0.0:
                    frac, ex = math.frexp(sc)
                    if frac == 0.5:
                        ex -= 1
                    sc = math.ldexp(1.0, ex)
            sc_out[i, b] = sc
            for j in range(lo, hi):
                x = a[i, j]
                if sc <= 0.0:
                    q[i, j] = math.copysign(0.0, x)
                    continue
                t = abs(x) / sc
                # first midpoint >= t (half_even) or > t (half_away)
                left = 0
                right = ng - 1
                while left < right:
                    mid = (left + right) // 2
                    if mids[mid] < t or (not half_even and mids[mid] == t):
                        left = mid + 1
                    else:
                        right = mid
                idx = left
                if half_even and idx < ng - 1 and t == mids[idx] and idx % 2 == 1:
                    idx += 1
                q[i, j] = math.copysign(grid[idx] * sc, x)
    return q, sc_out


if HAVE_NUMBA:
    _grid_quantize_numba = njit(cache=True)(_grid_quantize_loops)
else:  # pragma: no cover
    _grid_quantize_numba = _grid_quantize_loops


def grid_quantize(a, block, grid, half_even=True, pow2=False, scales=None, use_numba=None):
    """Quantize each row-major block of ``a`` onto ``scale * grid`` (mirrored for sign).

    ``grid`` holds the nonnegative magnitudes in increasing order, starting at 0.
    Per-block ``scale = block_max / grid[-1]`` unless ``scales`` is given.
    Returns ``(quantized, scales)`` with scales shaped ``(rows, n_blocks)``.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    grid = np.ascontiguousarray(grid, dtype=np.float64)
    m, n = a.shape
    nb = -(-n // block)
    has_scales = scales is not None
    sc = np.zeros((m, nb)) if scales is None else np.ascontiguousarray(scales, dtype=np.float64)
    if sc.shape != (m, nb):
        raise ValueError(f"scales shape {sc.shape} != {(m, nb)}")
    if use_numba is None:
        use_numba = USE_NUMBA
    fn = _grid_quantize_numba if use_numba else _grid_quantize_numpy
    return fn(a, int(block), grid, bool(half_even), bool(pow2), sc, has_scales)


# ---------------------------------------------------------------------------
# one-sided Jacobi singular values
# ---------------------------------------------------------------------------


def _jacobi_loops(u, tol, max_sweeps):
    m, n = u.shape
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for k in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(m):
                    alpha += u[i, p] * u[i, p]
                    beta += u[i, k] * u[i, k]
                    gamma += u[i, p] * u[i, k]
                if gamma == 0.0 or abs(gamma) <= tol * math.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                for i in range(m):
                    up = u[i, p]
                    uk = u[i, k]
                    u[i, p] = c * up - s * uk
                    u[i, k] = s * up + c * uk
        if not rotated:
            break
    out = np.empty(n)
    for j in range(n):
        acc = 0.0
        for i in range(m):
            acc += u[i, j] * u[i, j]
        out[j] = math.sqrt(acc)
    return out


def _jacobi_numpy(u, tol, max_sweeps):
    n = u.shape[1]
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for k in range(p + 1, n):
                a_p = u[:, p]
                a_k = u[:, k]
                alpha = a_p @ a_p
                beta = a_k @ a_k
                gamma = a_p @ a_k
                if gamma == 0.0 or abs(gamma) <= tol * math.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                u[:, p], u[:, k] = c * a_p - s * a_k, s * a_p + c * a_k
        if not rotated:
            break
    return np.sqrt((u * u).sum(axis=0))


if HAVE_NUMBA:
    _jacobi_numba = njit(cache=True)(_jacobi_loops)
else:  # pragma: no cover
    _jacobi_numba = _jacobi_loops


def jacobi_singular_values(a, tol=1e-15, max_sweeps=60, use_numba=None):
    """Singular values of ``a`` by one-sided (Hestenes) Jacobi rotations, descending.

    Slow compared to LAPACK but independent of it; used to cross-check spectra.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.shape[0] < a.shape[1]:
        a = a.T
    u = np.array(a, dtype=np.float64, order="C", copy=True)
    if use_numba is None:
        use_numba = USE_NUMBA
    fn = _jacobi_numba if use_numba else _jacobi_numpy
    return np.sort(fn(u, float(tol), int(max_sweeps)))[::-1]
