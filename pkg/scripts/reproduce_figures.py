#!/usr/bin/env python3
"""Run one or all of the canned figure recipes.

Each recipe writes plot-ready CSV files plus a JSON metadata sidecar under
the chosen output directory.  Exit status is the worst status across the
parts (0 ok, 3 numerical failure, 4 physics breakdown), matching the CLI.

    python3 scripts/reproduce_figures.py 5 6 --out-dir results
    python3 scripts/reproduce_figures.py --all --out-dir results
"""

import argparse
import sys
import time

from vdpchaos import reproduce


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("figures", nargs="*", type=int, help="figure ids (1..12)")
    ap.add_argument("--all", action="store_true", help="run every recipe")
    ap.add_argument("--out-dir", default="results", help="output directory")
    ap.add_argument("--seed", type=int, help="override both seeds")
    args = ap.parse_args()

    figures = list(range(1, 13)) if args.all else args.figures
    if not figures:
        ap.error("give figure ids or --all")
    overrides = []
    if args.seed is not None:
        overrides = [f"numerics.base_seed={args.seed}",
                     f"numerics.het_seed={args.seed}"]

    worst = 0
    for fig in figures:
        tic = time.perf_counter()
        status, files = reproduce(fig, out_prefix=f"{args.out_dir}/fig{fig}",
                                  overrides=overrides)
        worst = max(worst, status)
        print(f"figure {fig}: status {status} "
              f"({time.perf_counter() - tic:.1f} s)")
        for path in files:
            print(f"  {path}")
    return worst


if __name__ == "__main__":
    sys.exit(main())
