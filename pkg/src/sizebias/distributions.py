"""Seeded random streams and the scalar/matrix samplers used everywhere else.

Streams are derived from a root seed plus integer identifiers through
``numpy.random.SeedSequence`` spawn keys, backed by the counter-based Philox
generator, so every (replication, chain) pair owns an independent stream and
results do not depend on scheduling order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ConstraintViolationError, DecompositionError

__all__ = [
    "RandomStream",
    "sample_truncated_normal",
    "truncated_normal_logcdf_interval",
    "sample_inverse_gamma",
    "StructuredCovariance",
]


@dataclass(frozen=True)
class RandomStream:
    """A reproducible random source addressed by (seed, stream ids).

    Identical addresses reproduce identical draw sequences; distinct
    addresses are statistically independent.
    """

    seed: int
    ids: tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.ids)
        return np.random.Generator(np.random.Philox(ss))

    def substream(self, *ids: int) -> "RandomStream":
        return RandomStream(self.seed, self.ids + tuple(int(i) for i in ids))

    def kernel_seed(self) -> int:
        """A 32-bit seed for compiled kernels that run their own generator."""
        ss = np.random.SeedSequence(self.seed, spawn_key=self.ids)
        return int(ss.generate_state(1, dtype=np.uint32)[0])


def _interval_cdf(a, b):
    """Normal CDF mass on [a, b] and the lower CDF value, computed in
    whichever tail keeps precision (survival form on the right tail)."""
    with np.errstate(invalid="ignore"):  # two-sided infinite bounds
        flip = (a + b) > 0  # work in the left tail after reflection
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    p_lo = ndtr(lo)
    p_hi = ndtr(hi)
    return p_lo, p_hi, flip


def sample_truncated_normal(mean, sd, lo, hi, rng: np.random.Generator):
    """Draw from a normal distribution conditioned to the interval [lo, hi].

    Inverse-CDF on the interval probability, evaluated in the nearer tail via
    the complementary error function, so intervals sitting 12 standard
    deviations out still sample correctly.  Broadcasts over array arguments.

    Raises ConstraintViolationError when ``lo >= hi``.
    """
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(sd <= 0):
        raise ValueError("sd must be positive")
    if np.any(lo >= hi):
        raise ConstraintViolationError("lower bound must be below upper bound")
    a = (lo - mean) / sd
    b = (hi - mean) / sd
    shape = np.broadcast_shapes(a.shape, b.shape)
    a = np.broadcast_to(a, shape)
    b = np.broadcast_to(b, shape)
    u = rng.random(shape)
    p_lo, p_hi, flip = _interval_cdf(a, b)
    # Sample the CDF value uniformly between the endpoint values.  When the
    # interval mass underflows entirely, fall back to the midpoint.
    p = p_lo + u * (p_hi - p_lo)
    x = ndtri(p)
    x = np.where(flip, -x, x)
    with np.errstate(invalid="ignore"):
        mid = np.where(np.isfinite(a) & np.isfinite(b), 0.5 * (a + b), 0.0)
        x = np.where(np.isfinite(x) | ~(np.isfinite(a) & np.isfinite(b)), x, mid)
        x = np.clip(x, a, b)
    out = mean + sd * x
    return float(out) if out.ndim == 0 else out


def truncated_normal_logcdf_interval(a, b):
    """log of Phi(b) - Phi(a) for standardised bounds, stable in both tails."""
    p_lo, p_hi, _ = _interval_cdf(np.asarray(a, float), np.asarray(b, float))
    with np.errstate(divide="ignore"):
        return np.log(p_hi - p_lo)


def sample_inverse_gamma(shape, scale, rng: np.random.Generator):
    """Draw from the inverse-gamma distribution with density
    ``x^{-shape-1} exp(-scale/x)`` (up to normalisation).

    Implemented as ``scale`` over a unit-scale gamma draw.
    """
    shape = np.asarray(shape, dtype=float)
    scale = np.asarray(scale, dtype=float)
    if np.any(shape <= 0) or np.any(scale <= 0):
        raise ValueError("shape and scale must be positive")
    g = rng.standard_gamma(shape)
    out = scale / g
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=64)
def _unit_factor(m: int) -> np.ndarray:
    """Cholesky factor of I_m - J_m/(m+1) (unit error variance)."""
    c = np.eye(m) - np.full((m, m), 1.0 / (m + 1))
    return np.linalg.cholesky(c)


@dataclass(frozen=True)
class StructuredCovariance:
    """The exchangeable covariance with precision ``(I + 11') / sigma_e2``.

    Closed forms: ``Sigma = sigma_e2 * (I - J/(m+1))`` and
    ``det Sigma = sigma_e2^m / (m+1)``.
    """

    m: int
    sigma_e2: float

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("dimension must be at least 1")
        if self.sigma_e2 <= 0:
            raise ValueError("sigma_e2 must be positive")

    def dense(self) -> np.ndarray:
        m = self.m
        return self.sigma_e2 * (np.eye(m) - np.full((m, m), 1.0 / (m + 1)))

    def dense_inverse(self) -> np.ndarray:
        m = self.m
        return (np.eye(m) + np.ones((m, m))) / self.sigma_e2

    def cholesky(self) -> np.ndarray:
        return math.sqrt(self.sigma_e2) * _unit_factor(self.m)

    def log_det(self) -> float:
        return self.m * math.log(self.sigma_e2) - math.log(self.m + 1)

    def marginal_sd(self) -> float:
        """Common standard deviation of each coordinate."""
        return math.sqrt(self.sigma_e2 * self.m / (self.m + 1))

    def sample(self, mean: np.ndarray, rng: np.random.Generator, size: int | None = None):
        """Draw from N(mean, Sigma) in O(m) per draw via the rank-one update
        ``w = u - c * sum(u) * 1`` of an iid normal vector u."""
        m = self.m
        c = (1.0 - 1.0 / math.sqrt(m + 1)) / m
        shape = (m,) if size is None else (size, m)
        u = rng.standard_normal(shape)
        w = u - c * u.sum(axis=-1, keepdims=True)
        return np.asarray(mean, dtype=float) + math.sqrt(self.sigma_e2) * w


def dense_cholesky(cov: np.ndarray) -> np.ndarray:
    """Cholesky factor of a dense covariance, with a clear failure mode."""
    try:
        return np.linalg.cholesky(np.asarray(cov, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(f"covariance is not positive definite: {exc}") from exc
