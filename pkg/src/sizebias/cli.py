"""Command-line driver for the simulation study."""

from __future__ import annotations

import argparse
import logging
import sys

from .gibbs import GibbsConfig
from .harness import (
    NigConfig,
    emit_outputs,
    figure_cells,
    load_config_cells,
    run_cell,
    table_cells,
)
from .normconst import NormConstConfig


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sizebias",
        description="Reproduce the simulation study comparing selection-aware "
                    "inference (NIG) with the ignorable model (IG) and the "
                    "Horvitz-Thompson estimator (HT).",
    )
    p.add_argument("--config", help="key=value sections file defining cells")
    p.add_argument("--table", type=int, choices=[1, 2, 3, 4],
                   help="run the built-in grid behind this table")
    p.add_argument("--figure", type=int, choices=[1, 2, 3],
                   help="run the built-in setting behind this figure")
    p.add_argument("--seed", type=int, default=20260810)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default="out")
    p.add_argument("--variant", choices=["appendixB-literal", "lognormal-Y"],
                   default="appendixB-literal")
    p.add_argument("--ht-ci", choices=["rooted", "literal"], default="rooted")
    p.add_argument("--gibbs-keep", type=int, default=1000)
    p.add_argument("--burn-in", type=int, default=5000)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--sir-m0", type=int, default=200)
    p.add_argument("--k", type=int, default=200, help="replications per cell")
    p.add_argument("--n-total", type=int, default=100)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--inner-draws", type=int, default=1000)
    p.add_argument("--inner-burn-in", type=int, default=200)
    p.add_argument("--genz-shifts", type=int, default=8)
    p.add_argument("--genz-points", type=int, default=256)
    p.add_argument("--interval-kind", choices=["equal-tail", "hpd"],
                   default="equal-tail")
    p.add_argument("--plain-weights", action="store_true",
                   help="weight draws by the reciprocal constant only, "
                        "without the non-sampled selection factor")
    p.add_argument("--rows", help="comma-separated row indices to run (0-based)")
    p.add_argument("--verbose", "-v", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(message)s",
    )
    if not (args.config or args.table or args.figure):
        print("nothing to run: pass --config, --table, or --figure",
              file=sys.stderr)
        return 2

    nig = NigConfig(
        gibbs=GibbsConfig(burn_in=args.burn_in, keep=args.gibbs_keep,
                          thin=args.thin, variant=args.variant),
        constants=NormConstConfig(inner_burn_in=args.inner_burn_in,
                                  inner_draws=args.inner_draws,
                                  genz_shifts=args.genz_shifts,
                                  genz_points=args.genz_points),
        m0=args.sir_m0,
        exact_selection_weights=not args.plain_weights,
    )

    if args.config:
        cells = load_config_cells(args.config, args.seed, nig)
    elif args.table:
        cells = table_cells(args.table, args.seed, nig, args.k,
                            args.n_total, args.n)
    else:
        cells = figure_cells(args.figure, args.seed, nig, args.k,
                             args.n_total, args.n)
    if args.rows:
        wanted = {int(r) for r in args.rows.split(",")}
        cells = [c for i, c in enumerate(cells) if i in wanted]
    if args.interval_kind != "equal-tail" or args.ht_ci != "rooted":
        import dataclasses
        cells = [dataclasses.replace(c, interval_kind=args.interval_kind,
                                     ht_rooted=args.ht_ci == "rooted")
                 for c in cells]

    results = []
    for cell in cells:
        logging.info("running cell %s (K=%d, N=%d, n=%d)", cell.label,
                     cell.k_reps, cell.n_total, cell.n)
        try:
            results.append(run_cell(cell, workers=args.workers))
        except Exception as exc:
            logging.error("cell %s failed: %r", cell.label, exc)
            return 1

    written = emit_outputs(results, args.out_dir, table=args.table,
                           figure=args.figure,
                           manifest_extra={"seed": args.seed,
                                           "ht_ci": args.ht_ci})
    for path in written:
        logging.info("wrote %s", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
