"""Core domain types: size measures, their centered transform, and the
selection model.

A finite population of ``N`` units carries positive size measures
``nu_1..nu_N`` with known total ``t``.  Units enter the sample independently
with probability ``pi_i = n * nu_i / t``.  The centered coordinates

    ``z_i = nu_i - t/N``   (i < N),      ``z_N = t/N``

make the fixed-total constraint explicit: the last coordinate is a known
constant and the free coordinates live in a box intersected with a band on
their sum.  All functions here are pure; values are immutable after
construction and safe to share across processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintViolationError, InfeasibleDesignError

__all__ = [
    "SuperParams",
    "FinitePopulation",
    "ObservedData",
    "ZVector",
    "nu_to_z",
    "z_to_nu",
    "inclusion_probs",
    "component_bounds",
    "sum_bounds",
    "in_feasible_region",
    "in_conditional_region",
    "selection_log_prob",
    "nonsampled_log_factor",
]


@dataclass(frozen=True)
class SuperParams:
    """Superpopulation parameters: response location/scale and the linear
    size link ``nu = beta0 + beta1 * y + e``, ``e ~ N(0, sigma_e2)``."""

    mu: float
    sigma2: float
    beta0: float
    beta1: float
    sigma_e2: float

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if self.sigma_e2 <= 0:
            raise ValueError(f"sigma_e2 must be positive, got {self.sigma_e2}")

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.sigma2))

    @property
    def sigma_e(self) -> float:
        return float(np.sqrt(self.sigma_e2))


@dataclass(frozen=True)
class FinitePopulation:
    """A realised finite population: responses, size measures, known total."""

    y: np.ndarray
    nu: np.ndarray
    t: float
    size: int = field(init=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        nu = np.asarray(self.nu, dtype=float)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "size", y.shape[0])
        if y.shape != nu.shape or y.ndim != 1:
            raise ValueError("y and nu must be 1-d arrays of equal length")
        if np.any(nu <= 0):
            raise ValueError("all size measures must be positive")
        if abs(nu.sum() - self.t) > 1e-10 * max(abs(self.t), 1.0):
            raise ConstraintViolationError(
                f"size measures sum to {nu.sum()!r}, expected total {self.t!r}"
            )

    def max_sample_size(self) -> int:
        """Largest n for which every unit has inclusion probability < 1."""
        return int(np.floor(self.t / self.nu.max() - 1e-12))


@dataclass(frozen=True)
class ObservedData:
    """The analyst's information set: sampled responses, their selection
    probabilities, and the known size total.

    Units are indexed so that positions ``1..n`` are the sampled ones.
    ``z_s`` holds the n known centered coordinates plus the constant last
    coordinate ``t/N``.
    """

    sample_idx: np.ndarray
    y_s: np.ndarray
    pi_s: np.ndarray
    t: float
    n: int
    n_total: int

    nu_s: np.ndarray = field(init=False)
    z_s: np.ndarray = field(init=False)

    def __post_init__(self):
        idx = np.asarray(self.sample_idx, dtype=int)
        y_s = np.asarray(self.y_s, dtype=float)
        pi_s = np.asarray(self.pi_s, dtype=float)
        if not (len(idx) == len(y_s) == len(pi_s) == self.n):
            raise ValueError("sample arrays must all have length n")
        if self.n >= self.n_total:
            raise ValueError("sample size must be below the population size")
        if np.any(pi_s <= 0) or np.any(pi_s >= 1):
            raise InfeasibleDesignError("selection probabilities must lie in (0, 1)")
        nu_s = pi_s * self.t / self.n
        z_s = np.concatenate([nu_s - self.t / self.n_total, [self.t / self.n_total]])
        object.__setattr__(self, "sample_idx", idx)
        object.__setattr__(self, "y_s", y_s)
        object.__setattr__(self, "pi_s", pi_s)
        object.__setattr__(self, "nu_s", nu_s)
        object.__setattr__(self, "z_s", z_s)

    @property
    def z_s_head(self) -> np.ndarray:
        """Centered coordinates of the sampled units (without the constant)."""
        return self.z_s[:-1]


@dataclass(frozen=True)
class ZVector:
    """Centered size coordinates for a full population; the last entry is
    the constant ``t/N``."""

    z: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float))
        if self.z.ndim != 1 or self.z.shape[0] < 2:
            raise ValueError("need at least two coordinates")

    @property
    def size(self) -> int:
        return self.z.shape[0]

    @property
    def t(self) -> float:
        return float(self.z[-1] * self.size)

    @property
    def head(self) -> np.ndarray:
        return self.z[:-1]


def nu_to_z(nu: np.ndarray, t: float) -> ZVector:
    """Center size measures: ``z_i = nu_i - t/N`` for i < N, ``z_N = t/N``.

    Raises ConstraintViolationError when the sizes do not sum to ``t``
    (relative tolerance 1e-8).
    """
    nu = np.asarray(nu, dtype=float)
    n_total = nu.shape[0]
    if n_total < 2:
        raise ValueError("need at least two units")
    if abs(nu.sum() - t) > 1e-8 * max(abs(t), 1.0):
        raise ConstraintViolationError(
            f"size measures sum to {nu.sum()!r}, expected {t!r}"
        )
    mean = t / n_total
    z = np.empty(n_total)
    z[:-1] = nu[:-1] - mean
    z[-1] = mean
    return ZVector(z)


def z_to_nu(zv: ZVector) -> np.ndarray:
    """Invert the centering transform.

    ``nu_i = z_i + z_N`` for i < N and ``nu_N = z_N - sum(z_head)``; the
    forward map has Jacobian magnitude N, which the density code relies on.
    """
    z = zv.z
    nu = np.empty_like(z)
    nu[:-1] = z[:-1] + z[-1]
    # compensated sum keeps the round trip exact to 1e-12 even at N = 10^4
    nu[-1] = z[-1] - math.fsum(z[:-1])
    return nu


def inclusion_probs(nu: np.ndarray, n: int) -> np.ndarray:
    """First-order inclusion probabilities ``pi_i = n * nu_i / sum(nu)``.

    Raises InfeasibleDesignError when some unit would be selected with
    certainty (``pi_i >= 1``).
    """
    nu = np.asarray(nu, dtype=float)
    if np.any(nu <= 0):
        raise ValueError("all size measures must be positive")
    pi = n * nu / nu.sum()
    if np.any(pi >= 1.0):
        raise InfeasibleDesignError(
            "a unit has inclusion probability >= 1; reduce n or trim sizes"
        )
    return pi


def component_bounds(t: float, n: int, n_total: int) -> tuple[float, float]:
    """Box bounds shared by every free centered coordinate."""
    return -t / n_total, t / n - t / n_total


def sum_bounds(t: float, n: int, n_total: int) -> tuple[float, float]:
    """Bounds on the sum of all N-1 free centered coordinates."""
    return t / n_total - t / n, t / n_total


def in_feasible_region(z_head: np.ndarray, t: float, n: int, n_total: int) -> bool:
    """Whether the N-1 free coordinates describe a valid population:
    every implied size in [0, t/n] and the implied last size in [0, t/n].

    Inequalities are closed; boundary points count as feasible.
    """
    z_head = np.asarray(z_head, dtype=float)
    lo, hi = component_bounds(t, n, n_total)
    if np.any(z_head < lo) or np.any(z_head > hi):
        return False
    s_lo, s_hi = sum_bounds(t, n, n_total)
    total = z_head.sum()
    return (total >= s_lo) and (total <= s_hi)


def in_conditional_region(
    z_ns: np.ndarray, z_s_head: np.ndarray, t: float, n: int, n_total: int
) -> bool:
    """Slice of the feasible region at fixed sampled coordinates: component
    bounds on the non-sampled coordinates plus the sum band shifted by the
    known sampled sum."""
    z_ns = np.asarray(z_ns, dtype=float)
    z_s_head = np.asarray(z_s_head, dtype=float)
    lo, hi = component_bounds(t, n, n_total)
    if np.any(z_ns < lo) or np.any(z_ns > hi):
        return False
    s_lo, s_hi = sum_bounds(t, n, n_total)
    shift = z_s_head.sum()
    total = z_ns.sum()
    return (total >= s_lo - shift) and (total <= s_hi - shift)


def _log_factors(zv: ZVector, n: int):
    z = zv.z
    n_total = zv.size
    z_last = z[-1]
    rate = n / (n_total * z_last)
    sampled = z[:n] + z_last
    nonsampled = 1.0 - rate * (z[n : n_total - 1] + z_last)
    last_size = z_last - z[: n_total - 1].sum()
    last_factor = 1.0 - rate * last_size
    return rate, sampled, nonsampled, last_factor


def selection_log_prob(zv: ZVector, n: int, n_total: int) -> float:
    """Log-probability of the realised selection under independent
    per-unit sampling, as a function of the centered coordinates.

    Returns ``-inf`` when any factor is non-positive, signalling an
    infeasible configuration.
    """
    if zv.size != n_total:
        raise ValueError("coordinate vector length must equal the population size")
    rate, sampled, nonsampled, last_factor = _log_factors(zv, n)
    if np.any(sampled <= 0) or np.any(nonsampled <= 0) or last_factor <= 0:
        return float("-inf")
    return float(
        n * np.log(rate)
        + np.log(sampled).sum()
        + np.log(nonsampled).sum()
        + np.log(last_factor)
    )


def nonsampled_log_factor(zv: ZVector, n: int, n_total: int) -> float:
    """Log of the non-sampled part of the selection probability: the product
    of ``1 - pi_i`` over units left out of the sample.  This is the only part
    of the selection probability that varies with the latent coordinates."""
    if zv.size != n_total:
        raise ValueError("coordinate vector length must equal the population size")
    _, _, nonsampled, last_factor = _log_factors(zv, n)
    if np.any(nonsampled <= 0) or last_factor <= 0:
        return float("-inf")
    return float(np.log(nonsampled).sum() + np.log(last_factor))
