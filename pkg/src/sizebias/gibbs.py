"""Blocked Gibbs sampler for the approximate posterior over imputed
responses, latent centered sizes, and the superpopulation parameters.

The sweep updates, in fixed order: the non-sampled responses (conditionally
independent normals), the latent centered sizes (a single-site truncated
normal scan that keeps the state inside the feasible region), the response
parameters (conjugate normal/inverse-gamma), and the link parameters
(inverse-gamma for the noise scale, normals for intercept and slope).

Two model variants are supported.  ``appendixB-literal`` treats the response
itself as the Gaussian variable in the prior blocks, which makes every update
an exact conjugate draw.  ``lognormal-Y`` keeps the log-scale response prior
(with its 1/y density factor) and replaces the response update with an
independence Metropolis step proposed from the conjugate normal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .distributions import RandomStream, sample_inverse_gamma, sample_truncated_normal
from .errors import DegenerateStateError
from .model import ObservedData, component_bounds, in_conditional_region, sum_bounds

__all__ = [
    "GibbsConfig",
    "GibbsState",
    "GibbsDraws",
    "cond_draw_y_ns",
    "cond_draw_z_ns",
    "cond_draw_psi",
    "cond_draw_eta",
    "link_residual_ss",
    "initial_state",
    "run_gibbs",
]

VARIANTS = ("appendixB-literal", "lognormal-Y")


@dataclass(frozen=True)
class GibbsConfig:
    burn_in: int = 5000
    keep: int = 1000
    thin: int = 1
    variant: str = "appendixB-literal"
    init_policy: str = "default"
    engine: str = "compiled"
    random_scan: bool = False

    def __post_init__(self):
        if self.burn_in < 0 or self.keep < 1 or self.thin < 1:
            raise ValueError("require burn_in >= 0, keep >= 1, thin >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.engine not in ("compiled", "python"):
            raise ValueError(f"unknown engine {self.engine!r}")


@dataclass
class GibbsState:
    """One point of the chain.  ``y_ns`` holds the non-sampled responses in
    population order (positions n+1..N-1, then the closing unit); ``z_ns``
    the free centered sizes for positions n+1..N-1."""

    y_ns: np.ndarray
    z_ns: np.ndarray
    psi: tuple[float, float]
    eta: tuple[float, float, float]

    def copy(self) -> "GibbsState":
        return GibbsState(self.y_ns.copy(), self.z_ns.copy(), self.psi, self.eta)


@dataclass(frozen=True)
class GibbsDraws:
    """Retained chain states, stored column-wise."""

    y_ns: np.ndarray   # (keep, N-n)
    z_ns: np.ndarray   # (keep, N-n-1)
    psi: np.ndarray    # (keep, 2)
    eta: np.ndarray    # (keep, 3)
    diagnostics: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.y_ns.shape[0]

    def state(self, k: int) -> GibbsState:
        return GibbsState(
            self.y_ns[k].copy(),
            self.z_ns[k].copy(),
            (float(self.psi[k, 0]), float(self.psi[k, 1])),
            (float(self.eta[k, 0]), float(self.eta[k, 1]), float(self.eta[k, 2])),
        )


def _as_generator_and_seed(rng) -> tuple[np.random.Generator, int]:
    if isinstance(rng, RandomStream):
        return rng.generator(), rng.kernel_seed()
    seed = int(rng.integers(0, 2**32 - 1))
    return rng, seed


def _response_scale(psi, variant):
    """Prior mean/variance acting on the raw response in the y update."""
    mu, sig2 = psi
    if variant == "appendixB-literal":
        return mu, sig2
    mean = math.exp(mu + 0.5 * sig2)
    var = (math.exp(sig2) - 1.0) * math.exp(2.0 * mu + sig2)
    return mean, var


def cond_draw_y_ns(state: GibbsState, data: ObservedData, rng,
                   variant: str = "appendixB-literal") -> np.ndarray:
    """Draw the non-sampled responses given everything else.

    Under the literal variant each coordinate is an exact normal whose
    precision combines the response prior with the size link; the closing
    unit's mean uses the full coordinate sum.  Under the log-scale variant
    the same normal serves as an independence-Metropolis proposal.
    """
    gen = rng.generator() if isinstance(rng, RandomStream) else rng
    n, n_total, t = data.n, data.n_total, data.t
    m_y = n_total - n
    z_last = t / n_total
    mu, sig2 = state.psi
    b0, b1, se2 = state.eta
    sum_z_head = data.z_s_head.sum() + state.z_ns.sum()

    pm, pv = _response_scale(state.psi, variant)
    t1 = -0.5 / pv - 0.5 * b1 * b1 / se2
    var_y = -0.5 / t1
    sd_y = math.sqrt(var_y)

    lin = np.empty(m_y)
    lin[:-1] = b1 * (state.z_ns + z_last - b0) / se2
    lin[-1] = -b1 * (sum_z_head + b0 - z_last) / se2
    means = (pm / pv + lin) * var_y

    if variant == "appendixB-literal":
        return means + sd_y * gen.standard_normal(m_y)

    proposal = means + sd_y * gen.standard_normal(m_y)
    y_new = state.y_ns.copy()
    log_u = np.log(gen.random(m_y))
    for i in range(m_y):
        y_prop, y_cur = proposal[i], y_new[i]
        if y_prop <= 0.0:
            continue
        if i < m_y - 1:
            r_p = state.z_ns[i] - b0 - b1 * y_prop
            r_c = state.z_ns[i] - b0 - b1 * y_cur
        else:
            r_p = sum_z_head + b0 + b1 * y_prop
            r_c = sum_z_head + b0 + b1 * y_cur
        log_tgt_p = (-0.5 * (math.log(y_prop) - mu) ** 2 / sig2 - math.log(y_prop)
                     + z_last * b1 * y_prop / se2 - 0.5 * r_p * r_p / se2)
        log_tgt_c = (-0.5 * (math.log(y_cur) - mu) ** 2 / sig2 - math.log(y_cur)
                     + z_last * b1 * y_cur / se2 - 0.5 * r_c * r_c / se2)
        log_q_p = -0.5 * (y_prop - means[i]) ** 2 / var_y
        log_q_c = -0.5 * (y_cur - means[i]) ** 2 / var_y
        if log_u[i] < (log_tgt_p - log_tgt_c) - (log_q_p - log_q_c):
            y_new[i] = y_prop
    return y_new


def cond_draw_z_ns(state: GibbsState, data: ObservedData, rng,
                   diag: dict | None = None) -> np.ndarray:
    """Single-site truncated-normal scan over the latent centered sizes.

    Each site's bounds are the component box intersected with the sum band at
    the current values of the other sites, so the state cannot leave the
    feasible region.  Intervals narrower than 1e-12 are skipped for the sweep
    (counted in ``diag``); an inverted interval raises, since it means the
    incoming state was infeasible.
    """
    gen = rng.generator() if isinstance(rng, RandomStream) else rng
    n, n_total, t = data.n, data.n_total, data.t
    z_last = t / n_total
    b0, b1, se2 = state.eta
    box_lo, box_hi = component_bounds(t, n, n_total)
    band = sum_bounds(t, n, n_total)
    shift = data.z_s_head.sum()
    band_lo, band_hi = band[0] - shift, band[1] - shift

    theta_ns = b0 + b1 * state.y_ns[:-1]
    theta_last = b0 + b1 * state.y_ns[-1]
    t3 = shift + theta_last
    sd = math.sqrt(0.5 * se2)

    z = state.z_ns.copy()
    s = z.sum()
    for i in range(z.shape[0]):
        rest = s - z[i]
        lo_i = max(box_lo, band_lo - rest)
        hi_i = min(box_hi, band_hi - rest)
        if hi_i < lo_i - 1e-9:
            raise DegenerateStateError(
                f"empty truncation interval at site {i}: [{lo_i}, {hi_i}]"
            )
        if hi_i - lo_i < 1e-12:
            if diag is not None:
                diag["skipped_sites"] = diag.get("skipped_sites", 0) + 1
            continue
        mean_i = -0.5 * (t3 + rest - theta_ns[i])
        z[i] = sample_truncated_normal(mean_i, sd, lo_i, hi_i, gen)
        s = rest + z[i]
    return z


def _resolved_responses(state, data, variant):
    y_all = np.concatenate([data.y_s, state.y_ns])
    return y_all if variant == "appendixB-literal" else np.log(y_all)


def cond_draw_psi(state: GibbsState, data: ObservedData, rng,
                  variant: str = "appendixB-literal") -> tuple[float, float]:
    """Conjugate update of the response location and scale from the
    variant-resolved response vector."""
    gen = rng.generator() if isinstance(rng, RandomStream) else rng
    w = _resolved_responses(state, data, variant)
    n_total = data.n_total
    _, sig2 = state.psi
    mu = float(w.mean() + math.sqrt(sig2 / n_total) * gen.standard_normal())
    ss = float(((w - mu) ** 2).sum())
    if ss <= 0.0:
        raise DegenerateStateError("all responses equal: response scale degenerate")
    sig2 = float(sample_inverse_gamma(0.5 * n_total, 0.5 * ss, gen))
    return mu, sig2


def _full_coordinates(state, data):
    """(z_head of length N-1, implied sizes nu of length N, y of length N)."""
    z_head = np.concatenate([data.z_s_head, state.z_ns])
    z_last = data.t / data.n_total
    nu = np.empty(data.n_total)
    nu[:-1] = z_head + z_last
    nu[-1] = z_last - z_head.sum()
    y_all = np.concatenate([data.y_s, state.y_ns])
    return z_head, nu, y_all


def link_residual_ss(state: GibbsState, data: ObservedData) -> float:
    """Sum of squared link residuals between the implied sizes and the
    current linear link; the inverse-gamma scale of the noise update is half
    of this."""
    b0, b1, _ = state.eta
    _, nu, y_all = _full_coordinates(state, data)
    return float(((nu - (b0 + b1 * y_all)) ** 2).sum())


def cond_draw_eta(state: GibbsState, data: ObservedData, rng) -> tuple[float, float, float]:
    """Update the link parameters: inverse-gamma noise scale from the link
    residual sum of squares, then conjugate normals for intercept and slope."""
    gen = rng.generator() if isinstance(rng, RandomStream) else rng
    n_total, t = data.n_total, data.t
    b0, b1, _ = state.eta
    z_head, nu, y_all = _full_coordinates(state, data)

    rss = link_residual_ss(state, data)
    if rss <= 0.0:
        raise DegenerateStateError("link residuals vanished: noise scale degenerate")
    se2 = float(sample_inverse_gamma(0.5 * n_total, 0.5 * rss, gen))

    b0 = float(-(b1 * y_all.sum() - t) / n_total
               + math.sqrt(se2 / n_total) * gen.standard_normal())

    slope_stat = float(
        (y_all[:-1] * (b0 - z_head)).sum()
        + y_all[-1] * (b0 + z_head.sum())
        - (t / n_total) * y_all.sum()
    )
    ysq = float((y_all**2).sum())
    b1 = float(-slope_stat / ysq + math.sqrt(se2 / ysq) * gen.standard_normal())
    return b0, b1, se2


def initial_state(data: ObservedData, rng, variant: str = "appendixB-literal") -> GibbsState:
    """Feasible starting point: the leftover size total split equally across
    non-sampled units (strictly interior for non-extreme samples), responses
    from the ignorable posterior predictive, parameters from closed-form fits
    to the sampled data."""
    gen = rng.generator() if isinstance(rng, RandomStream) else rng
    n, n_total, t = data.n, data.n_total, data.t
    m_y = n_total - n

    share = (t - data.nu_s.sum()) / m_y
    z_ns = np.full(n_total - n - 1, share - t / n_total)

    w_s = data.y_s if variant == "appendixB-literal" else np.log(data.y_s)
    w_bar = float(w_s.mean())
    w_var = float(w_s.var(ddof=1)) if n > 1 else 1.0
    w_var = max(w_var, 1e-8 * max(w_bar**2, 1.0))
    sig2 = float(sample_inverse_gamma(0.5 * (n - 1), 0.5 * (n - 1) * w_var, gen)) \
        if n > 2 else w_var
    mu = w_bar + math.sqrt(sig2 / n) * float(gen.standard_normal())
    pred = mu + math.sqrt(sig2) * gen.standard_normal(m_y)
    y_ns = pred if variant == "appendixB-literal" else np.exp(pred)

    y_c = data.y_s - data.y_s.mean()
    denom = float((y_c**2).sum())
    b1 = float((y_c * (data.nu_s - data.nu_s.mean())).sum() / denom) if denom > 0 else 0.0
    b0 = float(data.nu_s.mean() - b1 * data.y_s.mean())
    resid = data.nu_s - b0 - b1 * data.y_s
    se2 = float((resid**2).sum() / max(n - 2, 1))
    se2 = max(se2, 1e-6 * max(float(data.nu_s.var()), 1e-12))

    return GibbsState(y_ns, z_ns, (mu, sig2), (b0, b1, se2))


def _run_python(data, cfg, gen, state):
    keep, thin = cfg.keep, cfg.thin
    m_y = data.n_total - data.n
    m_z = m_y - 1
    y_out = np.empty((keep, m_y))
    z_out = np.empty((keep, m_z))
    psi_out = np.empty((keep, 2))
    eta_out = np.empty((keep, 3))
    diag = {"skipped_sites": 0}

    kept = 0
    total = cfg.burn_in + keep * thin
    blocks = ["y", "z", "psi", "eta"]
    for sweep in range(1, total + 1):
        order = blocks if not cfg.random_scan else list(gen.permutation(blocks))
        for block in order:
            if block == "y":
                state.y_ns = cond_draw_y_ns(state, data, gen, cfg.variant)
            elif block == "z":
                state.z_ns = cond_draw_z_ns(state, data, gen, diag)
            elif block == "psi":
                state.psi = cond_draw_psi(state, data, gen, cfg.variant)
            else:
                state.eta = cond_draw_eta(state, data, gen)
        if not in_conditional_region(state.z_ns, data.z_s_head, data.t, data.n,
                                     data.n_total):
            raise DegenerateStateError(f"state left the feasible region at sweep {sweep}")
        if state.psi[1] < 1e-290 or state.eta[2] < 1e-290:
            raise DegenerateStateError(f"a scale collapsed to zero at sweep {sweep}")
        if sweep > cfg.burn_in and (sweep - cfg.burn_in) % thin == 0:
            y_out[kept] = state.y_ns
            z_out[kept] = state.z_ns
            psi_out[kept] = state.psi
            eta_out[kept] = state.eta
            kept += 1
    diag["engine"] = "python"
    return GibbsDraws(y_out, z_out, psi_out, eta_out, diag)


_FAULT_MESSAGES = {
    _kernels.FAULT_EMPTY_INTERVAL: "empty truncation interval",
    _kernels.FAULT_DEGENERATE_SCALE: "response scale degenerate",
    _kernels.FAULT_NONPOSITIVE_SCALE: "link residual sum of squares not positive",
    _kernels.FAULT_REGION: "state left the feasible region",
}


def _run_compiled(data, cfg, gen, seed, state):
    variant = (_kernels.VARIANT_LITERAL if cfg.variant == "appendixB-literal"
               else _kernels.VARIANT_LOGNORMAL)
    out = _kernels.gibbs_chain(
        data.y_s, data.z_s_head, data.t, data.n, data.n_total,
        state.y_ns, state.z_ns,
        np.asarray(state.psi, dtype=float), np.asarray(state.eta, dtype=float),
        cfg.burn_in, cfg.keep, cfg.thin, variant, seed,
    )
    y_out, z_out, psi_out, eta_out, skipped, mh_rate, code, site = out
    if code != _kernels.OK:
        msg = _FAULT_MESSAGES.get(code, "sampler fault")
        raise DegenerateStateError(f"{msg} (site {site})")
    diag = {"skipped_sites": int(skipped), "engine": "compiled",
            "mh_acceptance": float(mh_rate)}
    return GibbsDraws(y_out, z_out, psi_out, eta_out, diag)


def run_gibbs(data: ObservedData, cfg: GibbsConfig, rng) -> GibbsDraws:
    """Run the chain and return the retained draws.

    ``rng`` may be a RandomStream or a numpy Generator; either way the result
    is a deterministic function of it.  Initialisation is retried a bounded
    number of times before giving up.
    """
    gen, seed = _as_generator_and_seed(rng)
    if cfg.random_scan and cfg.engine == "compiled":
        cfg = replace(cfg, engine="python")
    last_error: Exception | None = None
    for _ in range(5):
        state = initial_state(data, gen, cfg.variant)
        try:
            if cfg.engine == "python":
                return _run_python(data, cfg, gen, state)
            return _run_compiled(data, cfg, gen, seed, state)
        except DegenerateStateError as exc:
            last_error = exc
            seed = int(gen.integers(0, 2**32 - 1))
    raise DegenerateStateError(
        f"initialisation failed after bounded retries: {last_error}"
    )
