"""Importance reweighting of chain draws into exact posterior samples, and
posterior summaries.

A retained draw's weight is the reciprocal of its feasibility-region
normalisation constant (log domain, normalised by log-sum-exp); optionally
the non-sampled selection factor joins the weight, which makes the
reweighted draws target the posterior with the selection probability of the
latent units included exactly.  Resampling is sequential
draw-and-renormalise without replacement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStateError
from .gibbs import GibbsDraws
from .model import ObservedData
from .normconst import ConstantEstimate

__all__ = [
    "WeightedDraws",
    "IntervalEstimate",
    "IntervalSummary",
    "compute_weights",
    "resample_without_replacement",
    "summarize",
    "finite_population_functionals",
    "nonsampled_selection_log_factors",
]


@dataclass(frozen=True)
class IntervalEstimate:
    point: float
    lo: float
    hi: float
    kind: str
    level: float = 0.95

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def covers(self, truth: float) -> bool:
        return self.lo <= truth <= self.hi


@dataclass(frozen=True)
class IntervalSummary:
    equal_tail: IntervalEstimate
    hpd: IntervalEstimate

    def pick(self, kind: str) -> IntervalEstimate:
        return self.equal_tail if kind == "equal-tail" else self.hpd


@dataclass(frozen=True)
class WeightedDraws:
    log_weights: np.ndarray
    normalized: np.ndarray
    draws: GibbsDraws | None = None

    @property
    def effective_sample_size(self) -> float:
        return float(1.0 / (self.normalized**2).sum())

    def __len__(self) -> int:
        return self.log_weights.shape[0]


def compute_weights(constants: "list[ConstantEstimate] | np.ndarray",
                    draws: GibbsDraws | None = None,
                    log_selection: np.ndarray | None = None) -> WeightedDraws:
    """Turn per-draw constants into normalised importance weights.

    Base weight: minus the log constant.  ``log_selection`` (per-draw log of
    the non-sampled selection factor) is added when supplied, giving the
    exact ratio between the posterior and the chain's stationary law.  Draws
    with an infinite log constant get weight zero; if none are finite the
    weights are undefined and we fail loudly.
    """
    if len(constants) and isinstance(constants[0], ConstantEstimate):
        log_c = np.array([c.log_c for c in constants], dtype=float)
    else:
        log_c = np.asarray(constants, dtype=float)
    log_w = -log_c
    if log_selection is not None:
        log_w = log_w + np.asarray(log_selection, dtype=float)
    finite = np.isfinite(log_w)
    if not finite.any():
        raise DegenerateStateError("every draw has zero weight")
    shifted = np.where(finite, log_w - log_w[finite].max(), -np.inf)
    w = np.exp(shifted)
    normalized = w / w.sum()
    return WeightedDraws(log_w, normalized, draws)


def resample_without_replacement(wd: WeightedDraws, m0: int,
                                 rng: np.random.Generator) -> np.ndarray:
    """Select ``m0`` distinct draw indices by repeatedly sampling one index
    from the current weights and renormalising over the remainder."""
    w = wd.normalized.copy()
    positive = int((w > 0).sum())
    if m0 > positive:
        raise ValueError(f"cannot select {m0} of {positive} positive-weight draws")
    chosen = np.empty(m0, dtype=int)
    for j in range(m0):
        total = w.sum()
        u = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(w), u, side="right"))
        idx = min(idx, len(w) - 1)
        while w[idx] == 0.0:  # guard against landing on a removed atom
            idx = (idx + 1) % len(w)
        chosen[j] = idx
        w[idx] = 0.0
    return chosen


def summarize(samples: np.ndarray, level: float = 0.95) -> IntervalSummary:
    """Equal-tail and highest-density intervals around the sample mean.

    Equal-tail: empirical quantiles.  Highest-density: the shortest window
    containing ``ceil(level * n)`` consecutive order statistics.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] < 50:
        raise ValueError("need at least 50 samples to summarise")
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    point = float(samples.mean())
    alpha = 1.0 - level
    # inverted-CDF quantiles make the equal-tail interval contain at least
    # ceil(level*n) order statistics, so the shortest such window (the
    # highest-density interval) can never be wider
    lo_q, hi_q = np.quantile(samples, [alpha / 2, 1 - alpha / 2],
                             method="inverted_cdf")
    equal_tail = IntervalEstimate(point, float(lo_q), float(hi_q), "equal-tail", level)

    s = np.sort(samples)
    m = s.shape[0]
    count = int(math.ceil(level * m))
    count = min(count, m)
    widths = s[count - 1:] - s[: m - count + 1]
    i = int(np.argmin(widths))
    hpd = IntervalEstimate(point, float(s[i]), float(s[i + count - 1]), "HPD", level)
    return IntervalSummary(equal_tail, hpd)


def nonsampled_selection_log_factors(draws: GibbsDraws, data: ObservedData) -> np.ndarray:
    """Log of the product of per-unit non-selection probabilities over the
    latent units, for every retained draw (vectorised)."""
    t, n, n_total = data.t, data.n, data.n_total
    z_last = t / n_total
    rate = n / (n_total * z_last)
    shift = data.z_s_head.sum()
    factors = 1.0 - rate * (draws.z_ns + z_last)            # (keep, N-n-1)
    last_size = z_last - (shift + draws.z_ns.sum(axis=1))   # implied closing size
    last = 1.0 - rate * last_size
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(
            (factors > 0).all(axis=1) & (last > 0),
            np.log(np.where(factors > 0, factors, 1.0)).sum(axis=1)
            + np.log(np.where(last > 0, last, 1.0)),
            -np.inf,
        )
    return out


def finite_population_functionals(draws: GibbsDraws, data: ObservedData,
                                  variant: str = "appendixB-literal"):
    """Per-draw finite-population mean and superpopulation mean.

    The population mean mixes the observed responses with the draw's imputed
    ones.  The superpopulation mean comes from the draw's response
    parameters: the location itself under the literal variant (the response
    is the Gaussian variable there), and exp(mu + sigma2/2) under the
    log-scale variant.
    """
    n_total = data.n_total
    y_sum_obs = data.y_s.sum()
    ybar = (y_sum_obs + draws.y_ns.sum(axis=1)) / n_total
    if variant == "appendixB-literal":
        ey = draws.psi[:, 0].copy()
    else:
        ey = np.exp(draws.psi[:, 0] + 0.5 * draws.psi[:, 1])
    return ybar, ey
