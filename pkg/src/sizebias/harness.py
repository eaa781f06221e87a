"""Simulation study driver: population generation, sampling, the three
inference methods, per-cell metrics, and table/figure data emission.

A cell fixes the superpopulation parameters and study sizes; ``run_cell``
repeats population -> sample -> inference ``k_reps`` times and aggregates
relative bias, interval width, coverage, and width-adjusted coverage.
Every replication owns a stream derived from (seed, cell id, replication),
so results are identical for any worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import ht_estimate, ig_infer, systematic_pps
from .distributions import RandomStream
from .errors import SizebiasError
from .gibbs import GibbsConfig, run_gibbs
from .model import FinitePopulation, ObservedData, SuperParams
from .normconst import NormConstConfig, log_normalizer_batch
from .sir import (
    IntervalEstimate,
    IntervalSummary,
    compute_weights,
    finite_population_functionals,
    nonsampled_selection_log_factors,
    resample_without_replacement,
    summarize,
)

log = logging.getLogger("sizebias")

__all__ = [
    "NigConfig",
    "NigResult",
    "ExperimentCell",
    "ReplicationRecord",
    "CellMetrics",
    "CellResult",
    "generate_population",
    "observe",
    "nig_infer",
    "run_replication",
    "run_cell",
    "adjust_width",
    "emit_outputs",
    "table_cells",
    "figure_cells",
    "load_config_cells",
]

_REGEN_LIMIT = 10_000


@dataclass(frozen=True)
class NigConfig:
    gibbs: GibbsConfig = field(default_factory=GibbsConfig)
    constants: NormConstConfig = field(default_factory=NormConstConfig)
    m0: int = 200
    level: float = 0.95
    exact_selection_weights: bool = True


@dataclass(frozen=True)
class NigResult:
    ybar: IntervalSummary
    ey: IntervalSummary
    ybar_draws: np.ndarray
    ey_draws: np.ndarray
    effective_sample_size: float
    nonsampled_mean: float
    diagnostics: dict


@dataclass(frozen=True)
class ExperimentCell:
    params: SuperParams
    n_total: int = 100
    n: int = 10
    k_reps: int = 200
    seed: int = 20260810
    cell_id: int = 0
    label: str = ""
    nig: NigConfig = field(default_factory=NigConfig)
    methods: tuple[str, ...] = ("nig", "ig", "ht")
    interval_kind: str = "equal-tail"
    ht_rooted: bool = True

    def __post_init__(self):
        if not (0 < self.n <= self.n_total):
            raise ValueError("need 0 < n <= N")
        if self.k_reps < 1:
            raise ValueError("need at least one replication")


@dataclass(frozen=True)
class TargetEstimate:
    point: float
    equal_tail: tuple[float, float]
    hpd: tuple[float, float] | None = None

    def interval(self, kind: str) -> tuple[float, float]:
        if kind == "hpd" and self.hpd is not None:
            return self.hpd
        return self.equal_tail


@dataclass(frozen=True)
class ReplicationRecord:
    rep: int
    truth_ybar: float
    truth_ey: float
    corr: float
    sample_mean: float
    estimates: dict
    nig_nonsampled_mean: float = math.nan
    ess: float = math.nan
    failed: str = ""


@dataclass(frozen=True)
class MetricRow:
    relative_bias: float
    mean_width: float
    coverage: float
    coverage_se: float
    adjusted_coverage: float


@dataclass(frozen=True)
class CellMetrics:
    rows: dict
    corr_mean: float
    n_ok: int
    n_failed: int

    def get(self, method: str, target: str) -> MetricRow:
        return self.rows[(method, target)]


@dataclass(frozen=True)
class CellResult:
    cell: ExperimentCell
    metrics: CellMetrics
    records: list


def generate_population(params: SuperParams, n_total: int, n: int,
                        rng: np.random.Generator) -> FinitePopulation:
    """Draw one finite population from the superpopulation.

    Responses are log-normal; sizes follow the linear link with Gaussian
    noise.  Individual noise terms are regenerated until every size is
    positive and no unit would be sampled with certainty, i.e. the
    superpopulation is truncated to designs the study can actually run.
    """
    y = np.exp(params.mu + params.sigma * rng.standard_normal(n_total))
    link = params.beta0 + params.beta1 * y
    nu = link + params.sigma_e * rng.standard_normal(n_total)

    rejections = 0
    bad = np.flatnonzero(nu <= 0)
    while bad.size:
        nu[bad] = link[bad] + params.sigma_e * rng.standard_normal(bad.size)
        rejections += bad.size
        if rejections > _REGEN_LIMIT:
            raise SizebiasError("population generation kept producing "
                                "non-positive sizes; parameters infeasible")
        bad = np.flatnonzero(nu <= 0)

    while n < n_total:  # a census has no certainty-unit constraint
        pi = n * nu / nu.sum()
        too_big = np.flatnonzero(pi >= 1.0)
        if not too_big.size:
            break
        i = too_big[np.argmax(nu[too_big])]
        while True:
            cand = link[i] + params.sigma_e * rng.standard_normal()
            rejections += 1
            if rejections > _REGEN_LIMIT:
                raise SizebiasError("population generation kept producing "
                                    "certainty units; parameters infeasible")
            if cand > 0:
                break
        nu[i] = cand

    return FinitePopulation(y, nu, float(nu.sum()))


def observe(pop: FinitePopulation, sample_idx: np.ndarray, n: int) -> ObservedData:
    """Build the analyst's view: sampled units relabelled to the front; the
    original indices ride along for reporting."""
    sample_idx = np.asarray(sample_idx, dtype=int)
    pi = n * pop.nu / pop.t
    return ObservedData(
        sample_idx=sample_idx,
        y_s=pop.y[sample_idx],
        pi_s=pi[sample_idx],
        t=pop.t,
        n=n,
        n_total=pop.size,
    )


def nig_infer(data: ObservedData, cfg: NigConfig, stream: RandomStream) -> NigResult:
    """Full pipeline: chain, per-draw constants, importance weights,
    without-replacement subsample, posterior summaries."""
    draws = run_gibbs(data, cfg.gibbs, stream.substream(0))
    constants = log_normalizer_batch(draws, data, cfg.constants, stream.substream(1))
    log_sel = (nonsampled_selection_log_factors(draws, data)
               if cfg.exact_selection_weights else None)
    wd = compute_weights(constants, draws, log_sel)
    ess = wd.effective_sample_size
    if ess < len(wd) / 20:
        log.warning("weight degeneracy: effective sample size %.1f of %d", ess, len(wd))
    chosen = resample_without_replacement(wd, cfg.m0, stream.substream(2).generator())

    ybar_all, ey_all = finite_population_functionals(draws, data, cfg.gibbs.variant)
    ybar_draws = ybar_all[chosen]
    ey_draws = ey_all[chosen]
    nonsampled = draws.y_ns[chosen].mean()

    diagnostics = dict(draws.diagnostics)
    diagnostics["ess"] = ess
    diagnostics["flagged_constants"] = sum(1 for c in constants if c.flag)
    return NigResult(
        ybar=summarize(ybar_draws, cfg.level),
        ey=summarize(ey_draws, cfg.level),
        ybar_draws=ybar_draws,
        ey_draws=ey_draws,
        effective_sample_size=ess,
        nonsampled_mean=float(nonsampled),
        diagnostics=diagnostics,
    )


def _target_estimate(summary: IntervalSummary) -> TargetEstimate:
    eq, hp = summary.equal_tail, summary.hpd
    return TargetEstimate(eq.point, (eq.lo, eq.hi), (hp.lo, hp.hi))


def run_replication(cell: ExperimentCell, rep: int) -> ReplicationRecord:
    """One population -> sample -> all requested methods."""
    root = RandomStream(cell.seed, (cell.cell_id, rep))
    try:
        pop = generate_population(cell.params, cell.n_total, cell.n,
                                  root.substream(0).generator())
        idx = systematic_pps(pop.nu, cell.n, root.substream(1).generator())
        census = cell.n == cell.n_total
        y_s = pop.y[idx]
        nu_s = pop.nu[idx]
        data = None if census else observe(pop, idx, cell.n)

        truth_ybar = float(pop.y.mean())
        truth_ey = math.exp(cell.params.mu + 0.5 * cell.params.sigma2)
        corr = float(np.corrcoef(pop.y, pop.nu)[0, 1])
        estimates: dict = {}
        nonsampled_mean = math.nan
        ess = math.nan

        if "nig" in cell.methods:
            if census:  # nothing to impute: the mean is known exactly
                point = truth_ybar
                est = TargetEstimate(point, (point, point), (point, point))
                estimates[("nig", "ybar")] = est
            else:
                res = nig_infer(data, cell.nig, root.substream(2))
                estimates[("nig", "ybar")] = _target_estimate(res.ybar)
                estimates[("nig", "ey")] = _target_estimate(res.ey)
                nonsampled_mean = res.nonsampled_mean
                ess = res.effective_sample_size

        if "ig" in cell.methods:
            ig = ig_infer(y_s, cell.n_total, cell.n, cell.nig.m0,
                          cell.nig.level, root.substream(3).generator(),
                          cell.nig.gibbs.variant)
            estimates[("ig", "ybar")] = _target_estimate(ig.ybar)
            estimates[("ig", "ey")] = _target_estimate(ig.ey)

        if "ht" in cell.methods:
            ht = ht_estimate(y_s, nu_s, pop.t, cell.n, cell.nig.level,
                             rooted=cell.ht_rooted).mean_scale(cell.n_total)
            estimates[("ht", "ybar")] = TargetEstimate(
                ht.ci.point, (ht.ci.lo, ht.ci.hi), None)

        return ReplicationRecord(rep, truth_ybar, truth_ey, corr,
                                 float(y_s.mean()), estimates,
                                 float(nonsampled_mean), float(ess))
    except Exception as exc:  # recorded, counted, surfaced by run_cell
        log.warning("replication %d failed: %r", rep, exc)
        return ReplicationRecord(rep, math.nan, math.nan, math.nan, math.nan,
                                 {}, failed=repr(exc))


def adjust_width(intervals_a, reference_intervals, truths) -> float:
    """Coverage of method a after re-centering each of its intervals at its
    own midpoint and forcing the paired reference width."""
    if not (len(intervals_a) == len(reference_intervals) == len(truths)):
        raise ValueError("interval lists must be replication-aligned")
    hits = 0
    for (lo_a, hi_a), (lo_r, hi_r), truth in zip(intervals_a, reference_intervals, truths):
        mid = 0.5 * (lo_a + hi_a)
        half = 0.5 * (hi_r - lo_r)
        if abs(truth - mid) <= half:
            hits += 1
    return hits / len(truths)


def _truth(records, target):
    return [r.truth_ybar if target == "ybar" else r.truth_ey for r in records]


def _aggregate(cell: ExperimentCell, records) -> CellMetrics:
    ok = [r for r in records if not r.failed]
    failed = len(records) - len(ok)
    rows = {}
    kind = cell.interval_kind
    present = sorted({key for r in ok for key in r.estimates})
    for method, target in present:
        truths = _truth(ok, target)
        ests = [r.estimates[(method, target)] for r in ok]
        points = np.array([e.point for e in ests])
        intervals = [e.interval(kind) for e in ests]
        widths = np.array([hi - lo for lo, hi in intervals])
        covered = np.array([lo <= tr <= hi for (lo, hi), tr in zip(intervals, truths)])
        rb = float(np.mean((points - np.array(truths)) / np.array(truths)))
        cp = float(covered.mean())
        cp_se = math.sqrt(cp * (1 - cp) / len(ok)) if ok else math.nan
        if method != "nig" and ("nig", target) in present:
            ref = [r.estimates[("nig", target)].interval(kind) for r in ok]
            adj = adjust_width(intervals, ref, truths)
        else:
            adj = cp
        rows[(method, target)] = MetricRow(rb, float(widths.mean()), cp, cp_se, adj)
    corr_mean = float(np.mean([r.corr for r in ok])) if ok else math.nan
    return CellMetrics(rows, corr_mean, len(ok), failed)


def run_cell(cell: ExperimentCell, workers: int = 1) -> CellResult:
    """Run all replications (optionally in parallel) and aggregate.

    Replications are independent; results are collected in replication order
    so the aggregate does not depend on the worker count.  The cell fails if
    more than 5% of replications fault.
    """
    reps = range(cell.k_reps)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_replication_task, [(cell, r) for r in reps]))
    else:
        records = [run_replication(cell, r) for r in reps]
    metrics = _aggregate(cell, records)
    if metrics.n_failed > 0.05 * cell.k_reps:
        raise SizebiasError(
            f"cell {cell.label or cell.cell_id}: {metrics.n_failed} of "
            f"{cell.k_reps} replications failed"
        )
    log.info("cell %s done: %d ok, %d failed", cell.label or cell.cell_id,
             metrics.n_ok, metrics.n_failed)
    return CellResult(cell, metrics, records)


def _replication_task(args):
    cell, rep = args
    return run_replication(cell, rep)


# ---------------------------------------------------------------------------
# study grids
# ---------------------------------------------------------------------------

_PROPORTIONAL_ROWS = [
    (0.5, 0.16), (0.5, 0.38), (0.5, 0.70),
    (1.0, 0.10), (1.0, 0.25), (1.0, 0.50),
    (1.5, 0.06), (1.5, 0.15), (1.5, 0.35),
    (2.0, 0.04), (2.0, 0.10), (2.0, 0.20),
]

_INTERCEPT_ROWS = [
    (beta0, sigma_e) for beta0 in (10.0, 50.0, 400.0)
    for sigma_e in (5.5, 2.5, 1.0, 0.1)
]


def table_cells(table: int, seed: int, nig: NigConfig, k_reps: int = 200,
                n_total: int = 100, n: int = 10,
                methods: tuple[str, ...] | None = None) -> list[ExperimentCell]:
    """The parameter grid behind each published table."""
    cells = []
    if table in (1, 2, 3):
        default_methods = ("nig", "ig") if table in (1, 2) else ("nig", "ht")
        for i, (mu, sigma) in enumerate(_PROPORTIONAL_ROWS):
            params = SuperParams(mu, sigma**2, 0.0, 1.0, 1.0)
            cells.append(ExperimentCell(
                params, n_total, n, k_reps, seed, cell_id=100 * table + i,
                label=f"table{table}:mu={mu},sigma={sigma}", nig=nig,
                methods=methods or default_methods))
    elif table == 4:
        for i, (beta0, sigma_e) in enumerate(_INTERCEPT_ROWS):
            params = SuperParams(0.5, 0.49, beta0, 1.0, sigma_e**2)
            cells.append(ExperimentCell(
                params, n_total, n, k_reps, seed, cell_id=400 + i,
                label=f"table4:beta0={beta0},sigma_e={sigma_e}", nig=nig,
                methods=methods or ("nig", "ht")))
    else:
        raise ValueError("table must be 1..4")
    return cells


def figure_cells(figure: int, seed: int, nig: NigConfig, k_reps: int = 200,
                 n_total: int = 100, n: int = 10) -> list[ExperimentCell]:
    if figure in (1, 2):
        params = SuperParams(0.5, 0.16**2, 0.0, 1.0, 1.0)
        methods = ("nig",) if figure == 1 else ("nig", "ht")
    elif figure == 3:
        params = SuperParams(0.5, 0.49, 50.0, 1.0, 0.01)
        methods = ("nig", "ht")
    else:
        raise ValueError("figure must be 1..3")
    return [ExperimentCell(params, n_total, n, k_reps, seed,
                           cell_id=900 + figure, label=f"figure{figure}",
                           nig=nig, methods=methods)]


def load_config_cells(path: str | Path, seed: int, nig: NigConfig) -> list[ExperimentCell]:
    """Cells from a key=value sections file (one section per cell)."""
    import configparser

    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    cells = []
    for i, section in enumerate(parser.sections()):
        s = parser[section]
        params = SuperParams(
            s.getfloat("mu", 0.5), s.getfloat("sigma", 0.16) ** 2,
            s.getfloat("beta0", 0.0), s.getfloat("beta1", 1.0),
            s.getfloat("sigma_e", 1.0) ** 2,
        )
        methods = tuple(m.strip() for m in s.get("methods", "nig,ig,ht").split(","))
        cells.append(ExperimentCell(
            params,
            s.getint("n_total", 100), s.getint("n", 10), s.getint("k", 200),
            s.getint("seed", seed), cell_id=s.getint("cell_id", 1000 + i),
            label=section, nig=nig, methods=methods,
        ))
    return cells


# ---------------------------------------------------------------------------
# output emission
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.10g}"
    return str(x)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def emit_outputs(results: list[CellResult], out_dir: str | Path,
                 table: int | None = None, figure: int | None = None,
                 manifest_extra: dict | None = None) -> list[Path]:
    """Write table/figure CSVs plus a run manifest; returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def cellrow(res):
        p = res.cell.params
        return [p.mu, p.sigma, res.metrics.corr_mean]

    if table == 1:
        rows = []
        for res in results:
            m = res.metrics
            rows.append(cellrow(res) + [
                m.get("ig", "ey").relative_bias, m.get("ig", "ybar").relative_bias,
                m.get("nig", "ey").relative_bias, m.get("nig", "ybar").relative_bias,
            ])
        path = out / "table1.csv"
        _write_csv(path, ["mu", "sigma", "corr", "ig_rb_ey", "ig_rb_ybar",
                          "nig_rb_ey", "nig_rb_ybar"], rows)
        written.append(path)
    elif table == 2:
        rows = []
        for res in results:
            m = res.metrics
            rows.append(cellrow(res) + [
                m.get("ig", "ey").mean_width, m.get("ig", "ey").coverage,
                m.get("ig", "ey").adjusted_coverage,
                m.get("ig", "ybar").mean_width, m.get("ig", "ybar").coverage,
                m.get("ig", "ybar").adjusted_coverage,
                m.get("nig", "ey").mean_width, m.get("nig", "ey").coverage,
                m.get("nig", "ybar").mean_width, m.get("nig", "ybar").coverage,
            ])
        path = out / "table2.csv"
        _write_csv(path, ["mu", "sigma", "corr",
                          "ig_ey_width", "ig_ey_cp", "ig_ey_adj_cp",
                          "ig_ybar_width", "ig_ybar_cp", "ig_ybar_adj_cp",
                          "nig_ey_width", "nig_ey_cp",
                          "nig_ybar_width", "nig_ybar_cp"], rows)
        written.append(path)
    elif table in (3, 4):
        rows = []
        for res in results:
            m = res.metrics
            p = res.cell.params
            lead = ([p.mu, p.sigma, m.corr_mean] if table == 3
                    else [p.beta0, p.sigma_e, m.corr_mean])
            rows.append(lead + [
                m.get("ht", "ybar").relative_bias, m.get("nig", "ybar").relative_bias,
                m.get("ht", "ybar").mean_width, m.get("ht", "ybar").coverage,
                m.get("ht", "ybar").adjusted_coverage,
                m.get("nig", "ybar").mean_width, m.get("nig", "ybar").coverage,
            ])
        path = out / f"table{table}.csv"
        lead_names = (["mu", "sigma", "corr"] if table == 3
                      else ["beta0", "sigma_e", "corr"])
        _write_csv(path, lead_names + ["ht_rb_ybar", "nig_rb_ybar",
                                       "ht_width", "ht_cp", "ht_adj_cp",
                                       "nig_width", "nig_cp"], rows)
        written.append(path)

    if figure is not None:
        res = results[0]
        if figure == 1:
            rows = [[r.rep, r.sample_mean, r.nig_nonsampled_mean]
                    for r in res.records if not r.failed]
            path = out / "figure1.csv"
            _write_csv(path, ["population", "sample_mean", "posterior_mean_nonsampled"], rows)
        else:
            rows = []
            for r in res.records:
                if r.failed:
                    continue
                nig_rb = (r.estimates[("nig", "ybar")].point - r.truth_ybar) / r.truth_ybar
                ht_rb = (r.estimates[("ht", "ybar")].point - r.truth_ybar) / r.truth_ybar
                rows.append([r.rep, nig_rb, ht_rb])
            path = out / f"figure{figure}.csv"
            _write_csv(path, ["population", "nig_relative_bias", "ht_relative_bias"], rows)
        written.append(path)

    # per-cell metric dump with binomial standard errors on coverages
    rows = []
    for res in results:
        for (method, target), row in sorted(res.metrics.rows.items()):
            rows.append([res.cell.label or res.cell.cell_id, method, target,
                         row.relative_bias, row.mean_width, row.coverage,
                         row.coverage_se, row.adjusted_coverage,
                         res.metrics.corr_mean, res.metrics.n_ok,
                         res.metrics.n_failed])
    path = out / "metrics.csv"
    _write_csv(path, ["cell", "method", "target", "relative_bias", "mean_width",
                      "coverage", "coverage_se", "adjusted_coverage",
                      "corr_mean", "n_ok", "n_failed"], rows)
    written.append(path)

    manifest = {
        "cells": [
            {
                "label": res.cell.label,
                "cell_id": res.cell.cell_id,
                "seed": res.cell.seed,
                "params": dataclasses.asdict(res.cell.params),
                "n_total": res.cell.n_total,
                "n": res.cell.n,
                "k_reps": res.cell.k_reps,
                "methods": list(res.cell.methods),
                "variant": res.cell.nig.gibbs.variant,
                "burn_in": res.cell.nig.gibbs.burn_in,
                "keep": res.cell.nig.gibbs.keep,
                "m0": res.cell.nig.m0,
                "interval_kind": res.cell.interval_kind,
            }
            for res in results
        ],
        "versions": _versions(),
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    path = out / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(path)
    return written


def _versions() -> dict:
    import numba
    import scipy

    from . import __version__

    return {"sizebias": __version__, "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}
