"""Symmetric uniform and E2M1 block quantizers, error matrices, and error statistics.

Values stay in float64 carriers; nothing is bit-packed.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError, DomainError, ShapeError
from .tensorio import as_matrix

FAMILIES = ("uniform_step", "int_levels", "e2m1_grid")
ROUNDINGS = ("half_even", "half_away")
SCALE_MODES = ("exact", "pow2")


def _round(x, rounding):
    if rounding == "half_even":
        return np.rint(x)
    if rounding == "half_away":
        return np.copysign(np.floor(np.abs(x) + 0.5), x)
    raise ConfigError(f"unknown rounding {rounding!r}")


def quantize_scalar(a, s, rounding="half_even"):
    """s * round(a / s). Works elementwise on arrays too."""
    if not s > 0:
        raise DomainError(f"step must be positive, got {s}")
    return s * _round(np.asarray(a, dtype=np.float64) / s, rounding)


def quantize_uniform(A, L, rounding="half_even"):
    """Global symmetric quantization with step a_max / L.

    Returns ``(A_q, step)``. An all-zero matrix is returned unchanged with step 0.
    """
    A = as_matrix(A)
    if L < 1:
        raise DomainError(f"level count must be >= 1, got {L}")
    amax = float(np.abs(A).max())
    if amax == 0.0:
        return A.copy(), 0.0
    s = amax / L
    return quantize_scalar(A, s, rounding), s


def e2m1_grid():
    """All finite values of the 4-bit E2M1 float (1 sign, 2 exponent, 1 mantissa bit, bias 1)."""
    values = set()
    for sign in (1.0, -1.0):
        for exp in range(4):
            for man in range(2):
                if exp == 0:
                    mag = man * 0.5  # subnormal
                else:
                    mag = 2.0 ** (exp - 1) * (1.0 + 0.5 * man)
                values.add(sign * mag + 0.0)
    return sorted(values)


E2M1_MAGNITUDES = np.array([v for v in e2m1_grid() if v >= 0.0])


@dataclass(frozen=True)
class QuantScheme:
    family: str = "e2m1_grid"
    L: int = 7
    step: float = 0.0
    block_size: int | None = 16  # None means one block spanning the whole matrix
    rounding: str = "half_even"
    scale_mode: str = "exact"

    def __post_init__(self):
        if self.family not in FAMILIES + ("identity",):
            raise ConfigError(f"unknown quantizer family {self.family!r}")
        if self.rounding not in ROUNDINGS:
            raise ConfigError(f"unknown rounding {self.rounding!r}")
        if self.scale_mode not in SCALE_MODES:
            raise ConfigError(f"unknown scale mode {self.scale_mode!r}")
        if self.family == "int_levels" and self.L < 1:
            raise ConfigError(f"int_levels needs L >= 1, got {self.L}")
        if self.family == "uniform_step" and not self.step > 0:
            raise ConfigError(f"uniform_step needs step > 0, got {self.step}")
        if self.block_size is not None and self.block_size < 1:
            raise ConfigError(f"block_size must be >= 1 or global, got {self.block_size}")

    @property
    def grid(self):
        if self.family == "e2m1_grid":
            return E2M1_MAGNITUDES
        return np.arange(self.L + 1, dtype=np.float64)

    def to_dict(self):
        d = asdict(self)
        d["block_size"] = "global" if self.block_size is None else self.block_size
        if self.family != "int_levels":
            d.pop("L")
        if self.family != "uniform_step":
            d.pop("step")
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        block = d.get("block_size", 16)
        if block == "global" or block is None:
            block = None
        else:
            block = int(block)
        try:
            return cls(
                family=d.get("family", "e2m1_grid"),
                L=int(d.get("L", 7)),
                step=float(d.get("step", 0.0)),
                block_size=block,
                rounding=d.get("rounding", "half_even"),
                scale_mode=d.get("scale_mode", "exact"),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad scheme {d!r}: {exc}") from exc

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


IDENTITY = QuantScheme(family="identity", block_size=None)

PRESETS = {
    "int4": QuantScheme(family="int_levels", L=7, block_size=None),
    "nvfp4": QuantScheme(family="e2m1_grid", block_size=16, scale_mode="exact"),
    "mxfp4": QuantScheme(family="e2m1_grid", block_size=32, scale_mode="pow2"),
}


def preset(name, block=None, level=None):
    """Scheme for a CLI preset; ``block``/``level`` override the defaults.

    For ``step`` the level value is the explicit step size.
    """
    if name == "step":
        if level is None:
            raise ConfigError("scheme 'step' needs an explicit step (--l)")
        return QuantScheme(family="uniform_step", step=float(level), block_size=None)
    if name not in PRESETS:
        raise ConfigError(f"unknown scheme preset {name!r}")
    base = PRESETS[name]
    kw = asdict(base)
    if block is not None:
        kw["block_size"] = None if block in (0, "global") else int(block)
    if level is not None:
        kw["L"] = int(level)
    return QuantScheme(**kw)


@dataclass
class QuantResult:
    values: np.ndarray
    scales: np.ndarray  # (rows, n_blocks); the grid spacing unit per block
    step_used: np.ndarray = field(default=None)  # uniform-equivalent step per block

    @property
    def mean_step(self):
        return float(np.mean(self.step_used))

    @property
    def max_step(self):
        return float(np.max(self.step_used))


def _grid_max_gap(grid):
    return float(np.max(np.diff(grid)))


def quantize_blockwise(A, scheme, scales=None):
    """Quantize ``A`` under ``scheme``.

    Each row is cut into contiguous blocks of ``block_size`` (the last may be
    short); ``block_size=None`` uses one block for the whole matrix. Per block
    the scale is ``block_max / grid_top`` (``grid_top`` = L or 6), optionally
    rounded up to a power of two, and every element goes to the nearest point
    of ``scale * grid``. Passing ``scales`` reuses them instead.

    ``step_used`` is the largest grid spacing of each block in value units,
    i.e. the step of the uniform quantizer with the same worst-case error.
    """
    A = as_matrix(A)
    if scheme.family == "identity":
        z = np.zeros((A.shape[0], 1))
        return QuantResult(A.copy(), z, z)
    if scheme.family == "uniform_step":
        q = quantize_scalar(A, scheme.step, scheme.rounding)
        st = np.full((1, 1), scheme.step)
        return QuantResult(q, st, st)
    grid = scheme.grid
    if scheme.block_size is None:
        flat = A.reshape(1, -1)
        sc_in = None if scales is None else np.asarray(scales, dtype=np.float64).reshape(1, 1)
        q, sc = _kernels.grid_quantize(
            flat, flat.shape[1], grid, scheme.rounding == "half_even", scheme.scale_mode == "pow2", sc_in
        )
        q = q.reshape(A.shape)
    else:
        q, sc = _kernels.grid_quantize(
            A, scheme.block_size, grid, scheme.rounding == "half_even", scheme.scale_mode == "pow2", scales
        )
    return QuantResult(q, sc, sc * _grid_max_gap(grid))


def local_steps(A, scheme, result):
    """Grid spacing, in value units, of the cell each element of ``A`` fell in.

    For uniform grids this is just the block step; for E2M1 it varies with
    magnitude (0.5, 1 or 2 times the block scale). Zero blocks get 0.
    """
    A = as_matrix(A)
    if scheme.family == "identity":
        return np.zeros_like(A)
    if scheme.family == "uniform_step":
        return np.full_like(A, scheme.step)
    grid = scheme.grid
    gaps = np.diff(grid)
    m, n = A.shape
    if scheme.block_size is None:
        sc = np.full((m, n), float(result.scales.ravel()[0]))
    else:
        sc = np.repeat(result.scales, scheme.block_size, axis=1)[:, :n]
    safe = np.where(sc > 0, sc, 1.0)
    cell = np.clip(np.searchsorted(grid, np.abs(A) / safe, side="right") - 1, 0, gaps.size - 1)
    return np.where(sc > 0, gaps[cell] * sc, 0.0)


def error_matrix(A, A_q):
    """E = A_q - A."""
    A = np.asarray(A, dtype=np.float64)
    A_q = np.asarray(A_q, dtype=np.float64)
    if A.shape != A_q.shape:
        raise ShapeError(f"shape mismatch: {A.shape} vs {A_q.shape}")
    return A_q - A


@dataclass
class ErrorStats:
    mean: float
    variance: float
    min: float
    max: float
    bin_edges: np.ndarray
    counts: np.ndarray
    step_used: float
    count: int

    def summary(self):
        return {
            "mean": self.mean,
            "variance": self.variance,
            "min": self.min,
            "max": self.max,
            "step_used": self.step_used,
            "count": self.count,
        }


def error_stats(E, s, bins=50):
    """Sample moments and a 50-bin histogram of the error entries."""
    e = np.asarray(E, dtype=np.float64).ravel()
    lo, hi = float(e.min()), float(e.max())
    if lo == hi:
        # zero-width range; give the histogram a unit-width span around the value
        counts, edges = np.histogram(e, bins=bins, range=(lo - 0.5, hi + 0.5))
    else:
        counts, edges = np.histogram(e, bins=bins, range=(lo, hi))
    return ErrorStats(
        mean=float(e.mean()),
        variance=float(e.var()),
        min=lo,
        max=hi,
        bin_edges=edges,
        counts=counts,
        step_used=float(np.mean(s)),
        count=e.size,
    )
