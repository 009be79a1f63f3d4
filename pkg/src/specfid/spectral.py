"""Singular values and the spectral metrics built on them."""

import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .tensorio import as_matrix

DEFAULT_REL_FLOOR = 1e-10


def singular_values(A):
    """Descending singular values of ``A`` (LAPACK gesdd, values only)."""
    A = as_matrix(A)
    s = np.linalg.svd(A, compute_uv=False)
    return np.sort(np.abs(s))[::-1]


def _sigma(sigma):
    s = np.asarray(sigma, dtype=np.float64).ravel()
    if s.size == 0:
        raise DomainError("empty spectrum")
    return s


def stable_rank(sigma):
    """||A||_F^2 / ||A||_2^2 from the singular values."""
    s = _sigma(sigma)
    s1 = s.max()
    if s1 <= 0:
        raise DomainError("stable rank is undefined for the zero matrix")
    return float(np.sum((s / s1) ** 2))


def _scaled_squares(s):
    # rescale by a power of two near the largest value (exact) so tiny spectra do not underflow
    s1 = np.abs(s).max()
    if s1 <= 0:
        raise DomainError("energy concentration is undefined for the zero matrix")
    return np.ldexp(s, -int(np.frexp(s1)[1])) ** 2


def energy_concentration(sigma, k):
    """F_A(k) = H_k / (H_k + T_k): fraction of squared mass in the top k values."""
    s = _sigma(sigma)
    if not 1 <= k <= s.size:
        raise IndexError(f"k={k} outside 1..{s.size}")
    sq = _scaled_squares(s)
    head = sq[:k].sum()
    tail = sq[k:].sum()
    return float(head / (head + tail))


def cumulative_energy(sigma):
    """F_A(k) for every k = 1..len(sigma); the last entry is exactly 1."""
    sq = _scaled_squares(_sigma(sigma))
    cum = np.cumsum(sq) / sq.sum()
    cum[-1] = 1.0
    return np.minimum(cum, 1.0)


@dataclass(frozen=True)
class PowerFit:
    mu: float
    decay: float
    r_squared: float
    k_lo: int
    k_hi: int
    degenerate: bool = False

    def to_dict(self):
        return {
            "mu": self.mu,
            "decay": self.decay,
            "r_squared": self.r_squared,
            "k_range": [self.k_lo, self.k_hi],
            "degenerate": self.degenerate,
        }


def ols(x, y):
    """Ordinary least squares y ~ a + b x. Returns (slope, intercept, r2, degenerate).

    A zero-variance target with zero residual gets r2 = 1 and the degenerate flag.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    sxx = dx @ dx
    if sxx == 0:
        raise DomainError("regressor has zero variance")
    slope = (dx @ (y - ym)) / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    ss_res = resid @ resid
    ss_tot = (y - ym) @ (y - ym)
    # a constant target is fitted exactly (up to rounding in the intercept)
    if ss_tot <= 1e-28 * max(1.0, ym * ym) * y.size:
        return float(slope), float(intercept), 1.0, True
    return float(slope), float(intercept), float(1.0 - ss_res / ss_tot), False


def fit_power_law(sigma, k_lo=1, k_hi=None):
    """Fit sigma_k ~ mu * k^-decay by OLS of ln sigma_k on ln k over [k_lo, k_hi] (1-based, inclusive)."""
    s = _sigma(sigma)
    if k_hi is None:
        k_hi = default_fit_hi(s.size)
    if not (1 <= k_lo < k_hi <= s.size):
        raise DomainError(f"bad fit range [{k_lo}, {k_hi}] for {s.size} values")
    if k_hi - k_lo + 1 < 3:
        raise DomainError("power-law fit needs at least 3 points")
    seg = s[k_lo - 1 : k_hi]
    if np.any(seg <= 0):
        raise DomainError("power-law fit range contains zero singular values")
    k = np.arange(k_lo, k_hi + 1, dtype=np.float64)
    slope, intercept, r2, degenerate = ols(np.log(k), np.log(seg))
    if degenerate:
        slope = 0.0 if abs(slope) < 1e-12 else slope
    return PowerFit(float(math.exp(intercept)), float(-slope) + 0.0, r2, int(k_lo), int(k_hi), degenerate)


def default_fit_hi(n):
    """Head fit range end: ceil(0.1 * n), but at least 3 points when possible."""
    return min(n, max(3, math.ceil(0.1 * n)))


def weyl_gap(sigma, sigma_tilde):
    """max_k |sigma_tilde_k - sigma_k|."""
    a = np.asarray(sigma, dtype=np.float64)
    b = np.asarray(sigma_tilde, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"spectrum lengths differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(b - a)))


@dataclass(frozen=True)
class RelativeErrors:
    k: np.ndarray  # 1-based indices kept
    eps: np.ndarray
    excluded: np.ndarray  # 1-based indices below the floor

    def pairs(self):
        return list(zip(self.k.tolist(), self.eps.tolist()))


def relative_errors(sigma, sigma_tilde, floor=DEFAULT_REL_FLOOR):
    """eps_k = |sigma_tilde_k - sigma_k| / sigma_k for sigma_k > floor * sigma_1."""
    a = np.asarray(sigma, dtype=np.float64)
    b = np.asarray(sigma_tilde, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"spectrum lengths differ: {a.shape} vs {b.shape}")
    if floor < 0:
        raise DomainError(f"floor must be >= 0, got {floor}")
    idx = np.arange(1, a.size + 1)
    s1 = a.max() if a.size else 0.0
    keep = (a > floor * s1) & (a > 0)
    eps = np.abs(b[keep] - a[keep]) / a[keep]
    return RelativeErrors(idx[keep], eps, idx[~keep])


@dataclass
class SpectralSummary:
    sigma: np.ndarray
    frob_sq: float
    spec_sq: float
    stable_rank: float
    power_fit: PowerFit | None = None

    @classmethod
    def from_matrix(cls, A, k_lo=1, k_hi=None):
        A = as_matrix(A)
        s = singular_values(A)
        return cls.from_sigma(s, float(np.sum(A * A)), k_lo, k_hi)

    @classmethod
    def from_sigma(cls, s, frob_sq=None, k_lo=1, k_hi=None):
        s = _sigma(s)
        if frob_sq is None:
            frob_sq = float(np.sum(s**2))
        spec_sq = float(s[0] ** 2)
        sr = stable_rank(s) if s[0] > 0 else float("nan")
        fit = None
        try:
            fit = fit_power_law(s, k_lo, k_hi)
        except DomainError:
            pass  # too few points or zeros in range: no fit reported
        return cls(s, frob_sq, spec_sq, sr, fit)

    def table(self):
        cum = cumulative_energy(self.sigma) if self.sigma[0] > 0 else np.zeros_like(self.sigma)
        return np.arange(1, self.sigma.size + 1), self.sigma, cum

    def to_csv(self, frac_column="sigma_sq_cum_frac"):
        k, s, cum = self.table()
        buf = io.StringIO()
        buf.write(f"k,sigma,{frac_column}\n")
        for ki, si, ci in zip(k, s, cum):
            buf.write(f"{ki},{float(si)!r},{float(ci)!r}\n")
        return buf.getvalue()

    def scalars(self):
        return {
            "n_values": int(self.sigma.size),
            "frob_sq": self.frob_sq,
            "spec_sq": self.spec_sq,
            "stable_rank": None if math.isnan(self.stable_rank) else self.stable_rank,
            "power_fit": None if self.power_fit is None else self.power_fit.to_dict(),
        }

    def to_json(self):
        return json.dumps(self.scalars(), sort_keys=True, indent=2)
