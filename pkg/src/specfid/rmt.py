"""Closed-form random-matrix quantities for spiked power-law covariances.

Noise floor, Marchenko-Pastur edge, the BBP outlier map, Stieltjes transforms,
and the matrix-Bernstein tail bound with its inverse.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DomainError


@dataclass(frozen=True)
class SpikedModel:
    """Population eigenvalues tau_k = L_scale * k^-alpha with a top-r head."""

    L_scale: float
    alpha: float
    r: int
    d: int
    c: float

    def __post_init__(self):
        if not self.L_scale > 0:
            raise DomainError(f"L_scale must be positive, got {self.L_scale}")
        if not self.alpha > 1:
            raise DomainError(f"alpha must exceed 1, got {self.alpha}")
        if not self.c > 0:
            raise DomainError(f"aspect ratio c must be positive, got {self.c}")
        if not 1 <= self.r < self.d:
            raise DomainError(f"need 1 <= r < d, got r={self.r}, d={self.d}")

    def taus(self):
        return self.L_scale * np.arange(1, self.d + 1, dtype=np.float64) ** -self.alpha


@dataclass(frozen=True)
class TailBoundParams:
    m: int
    n: int
    B: float  # per-entry error variance
    R: float  # almost-sure bound on one entry's perturbation

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise DomainError(f"dims must be positive, got {self.m}x{self.n}")
        if self.B < 0:
            raise DomainError(f"B must be >= 0, got {self.B}")
        if not self.R > 0:
            raise DomainError(f"R must be positive, got {self.R}")

    @property
    def delta2(self):
        return max(self.m, self.n) * self.B

    @classmethod
    def for_step(cls, m, n, s):
        """Round-to-nearest model: B = s^2/12, R = s/2."""
        if not s > 0:
            raise DomainError(f"step must be positive, got {s}")
        return cls(m, n, s * s / 12.0, s / 2.0)


def tau(model, k):
    if not 1 <= k <= model.d:
        raise IndexError(f"k={k} outside 1..{model.d}")
    return model.L_scale * float(k) ** -model.alpha


def noise_level(model):
    """nu^2(d): mean of tau_{r+1..d}, summed directly (smallest terms first)."""
    if model.r >= model.d:
        raise DomainError(f"need r < d, got r={model.r}, d={model.d}")
    j = np.arange(model.d, model.r, -1, dtype=np.float64)
    return model.L_scale * math.fsum(j**-model.alpha) / (model.d - model.r)


def mp_bulk_edge(nu2, c):
    if nu2 < 0 or c < 0:
        raise DomainError(f"nu2 and c must be nonnegative, got {nu2}, {c}")
    return nu2 * (1.0 + math.sqrt(c)) ** 2


def bbp_map(tau_, nu2, c):
    """Limiting outlier location rho(tau) = tau * (1 + c nu2 / (tau - nu2))."""
    if not tau_ > nu2:
        raise DomainError(f"tau={tau_} must exceed nu2={nu2}; use mp_bulk_edge for sub-critical spikes")
    return tau_ * (1.0 + c * nu2 / (tau_ - nu2))


def phase_threshold(nu2, c):
    return nu2 * (1.0 + math.sqrt(c))


def classify_spectrum(taus, nu2, c):
    """Split 1-based indices into (supercritical, subcritical) at nu2 (1 + sqrt c).

    A value exactly on the threshold is subcritical.
    """
    t = np.asarray(taus, dtype=np.float64)
    if np.any(np.diff(t) > 0):
        raise DataError("taus must be sorted in descending order")
    thr = phase_threshold(nu2, c)
    idx = np.arange(1, t.size + 1)
    sup = t > thr
    return idx[sup].tolist(), idx[~sup].tolist()


def _check_z(z):
    z = complex(z)
    if not z.imag > 0:
        raise DomainError(f"z must lie in the upper half-plane, got {z}")
    return z


def stieltjes_discrete(eigs, z):
    """m(z) = mean_j 1 / (e_j - z), summed over distinct atoms with their weights."""
    z = _check_z(z)
    e = np.asarray(eigs, dtype=np.float64).ravel()
    if e.size == 0:
        raise DomainError("empty spectrum")
    atoms, counts = np.unique(e, return_counts=True)
    return complex(np.sum((counts / e.size) / (atoms - z)))


def stieltjes_white(nu2, z):
    """1 / (nu2 - z): the transform of a point mass at nu2."""
    return stieltjes_discrete([nu2], z)


def stieltjes_gap(model, z=1j):
    """|m_noise(z) - m_white(z)| for the tail eigenvalues tau_{r+1..d}."""
    z = _check_z(z)
    tail = model.taus()[model.r :]
    nu2 = noise_level(model)
    return abs(stieltjes_discrete(tail, z) - stieltjes_white(nu2, z))


def bernstein_tail_bound(p, t):
    """min(1, (m+n) exp(-(t^2/2) / (delta^2 + R t / 3)))."""
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    if t == 0:
        return 1.0
    expo = -(0.5 * t * t) / (p.delta2 + p.R * t / 3.0)
    return float(min(1.0, max(0.0, (p.m + p.n) * math.exp(expo))))


def invert_tail_bound(p, theta):
    """Unique t >= 0 with (m+n) exp(-(t^2/2) / (delta^2 + R t/3)) = theta."""
    if not 0 < theta < 1:
        raise DomainError(f"theta must lie in (0, 1), got {theta}")
    ell = math.log((p.m + p.n) / theta)
    b = ell * p.R / 3.0
    return b + math.sqrt(b * b + 2.0 * ell * p.delta2)


def epsilon_budget(p, theta, sigma_k):
    """Relative-error level eps_k(theta) = F^-1(theta) / sigma_k."""
    if not sigma_k > 0:
        raise DomainError(f"sigma_k must be positive, got {sigma_k}")
    return invert_tail_bound(p, theta) / sigma_k


def xi(k, alpha, r):
    """Head profile k^-alpha, frozen at r^-alpha beyond r."""
    k = np.asarray(k, dtype=np.float64)
    return np.minimum(k, r) ** -float(alpha)


def failure_profile(mu, alpha, r, eta, s, m, n, k_max=None, R=None):
    """Bernstein bound on P(eps_k > eta) for sigma_k = mu * xi_k^(1/2), k = 1..k_max.

    B = s^2/12 and R = s/2 unless ``R`` is given (for grids whose worst-case
    rounding error exceeds half the nominal step).
    """
    if not eta > 0:
        raise DomainError(f"eta must be positive, got {eta}")
    if not s > 0:
        raise DomainError(f"s must be positive, got {s}")
    if k_max is None:
        k_max = min(m, n)
    p = TailBoundParams(m, n, s * s / 12.0, s / 2.0 if R is None else R)
    k = np.arange(1, k_max + 1)
    sig = mu * np.sqrt(xi(k, alpha, r))
    return np.array([bernstein_tail_bound(p, eta * sv) for sv in sig])
