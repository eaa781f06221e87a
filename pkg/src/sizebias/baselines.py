"""Comparison methods: systematic probability-proportional-to-size sampling,
the Horvitz-Thompson estimator with its normal-theory interval, and the
ignorable-model posterior that conditions on the responses alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import InfeasibleDesignError
from .sir import IntervalEstimate, IntervalSummary, summarize

__all__ = ["HTResult", "systematic_pps", "ht_estimate", "ig_infer", "IgResult"]


@dataclass(frozen=True)
class HTResult:
    total_hat: float
    var_hat: float
    ci: IntervalEstimate

    def mean_scale(self, n_total: int) -> "HTResult":
        """The same estimate expressed for the population mean."""
        ci = self.ci
        scaled = IntervalEstimate(ci.point / n_total, ci.lo / n_total,
                                  ci.hi / n_total, ci.kind, ci.level)
        return HTResult(self.total_hat / n_total, self.var_hat / n_total**2, scaled)


def systematic_pps(nu: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Systematic size-proportional sampling on the cumulative-size circle.

    Units are randomly ordered first (frame order must not leak into the
    selection pattern), then every ``t/n``-th point of a uniformly started
    grid picks the unit whose cumulative interval contains it.  Exactly n
    distinct units come back; unit i is included with probability
    ``n * nu_i / t``.
    """
    nu = np.asarray(nu, dtype=float)
    t = nu.sum()
    if n == nu.shape[0]:  # census: the only possible sample
        return np.arange(n)
    if np.any(n * nu >= t):
        raise InfeasibleDesignError("a certainty unit makes systematic pps infeasible")
    perm = rng.permutation(nu.shape[0])
    skip = t / n
    start = rng.random() * skip
    points = start + skip * np.arange(n)
    cum = np.cumsum(nu[perm])
    pos = np.searchsorted(cum, points, side="right")
    idx = perm[pos]
    if len(np.unique(idx)) != n:
        raise InfeasibleDesignError("systematic pps produced a duplicate unit")
    return np.sort(idx)


def ht_estimate(y_s: np.ndarray, nu_s: np.ndarray, t: float, n: int,
                level: float = 0.95, rooted: bool = True) -> HTResult:
    """Horvitz-Thompson total estimate with a normal-theory interval.

    The point estimate inflates each sampled response by the inverse of its
    size share.  The interval half-width uses the square root of the
    variance term by default; ``rooted=False`` reproduces the variance term
    used directly as a half-width.
    """
    y_s = np.asarray(y_s, dtype=float)
    nu_s = np.asarray(nu_s, dtype=float)
    if n < 2:
        raise ValueError("variance is undefined for n < 2")
    if np.any(nu_s <= 0):
        raise ValueError("size measures must be positive")
    p = nu_s / t
    expanded = y_s / p
    total_hat = float(expanded.sum() / n)
    var_hat = float(((expanded - total_hat) ** 2).sum() / (n * (n - 1)))
    z = float(ndtri(0.5 + level / 2))
    half = z * math.sqrt(var_hat) if rooted else z * var_hat
    ci = IntervalEstimate(total_hat, total_hat - half, total_hat + half,
                          "equal-tail", level)
    return HTResult(total_hat, var_hat, ci)


@dataclass(frozen=True)
class IgResult:
    ybar_draws: np.ndarray
    ey_draws: np.ndarray
    ybar: IntervalSummary
    ey: IntervalSummary


def ig_infer(y_s: np.ndarray, n_total: int, n: int, m0: int,
             level: float, rng: np.random.Generator,
             variant: str = "appendixB-literal") -> IgResult:
    """Posterior for the ignorable model: fit the response distribution to
    the sampled values under the flat location / reciprocal scale prior,
    ignoring how units were selected, then predict the rest.

    Returns posterior draws and interval summaries of the finite-population
    mean and the superpopulation mean.
    """
    y_s = np.asarray(y_s, dtype=float)
    if n < 3:
        raise ValueError("need at least 3 sampled values")
    w = y_s if variant == "appendixB-literal" else np.log(y_s)
    w_bar = float(w.mean())
    s2 = float(w.var(ddof=1))
    if s2 <= 0.0:
        raise ValueError("zero sample variance: scale posterior is degenerate")

    df = n - 1
    sig2 = (0.5 * df * s2) / rng.standard_gamma(df / 2, size=m0)
    mu = w_bar + np.sqrt(sig2 / n) * rng.standard_normal(m0)

    m_pred = n_total - n
    pred = mu[:, None] + np.sqrt(sig2)[:, None] * rng.standard_normal((m0, m_pred))
    if variant == "lognormal-Y":
        pred = np.exp(pred)
        ey_draws = np.exp(mu + 0.5 * sig2)
    else:
        ey_draws = mu.copy()
    ybar_draws = (y_s.sum() + pred.sum(axis=1)) / n_total

    return IgResult(ybar_draws, ey_draws,
                    summarize(ybar_draws, level), summarize(ey_draws, level))
