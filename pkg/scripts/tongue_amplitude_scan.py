#!/usr/bin/env python3
"""Trace the 1:1 entrainment tongue over a range of forcing amplitudes.

For each amplitude the locked branch of the coarse stroboscopic map is
continued in omega in both directions until it folds; the two fold
frequencies are the tongue edges.  Output is one CSV row per amplitude:

    amplitude,omega_left,omega_right,width

Homogeneous (single oscillator) by default; --beta > 0 together with
--n-osc and --order switches to an averaged heterogeneous network map.

    python3 scripts/tongue_amplitude_scan.py --amplitudes 0.1 0.25 0.5
    python3 scripts/tongue_amplitude_scan.py --beta 0.5 --n-osc 200 \\
        --order 2 --realizations 20
"""

import argparse
import csv
import os
import sys
import time

from vdpchaos import (
    CoarseMapConfig,
    ContinuationConfig,
    Heterogeneity,
    ModelParams,
    NumericalError,
    continue_branch,
    default_rough_guess,
    locate_folds,
    newton_fixed_point,
    relaxed_guess,
)


def tongue_edges(params, coarse, het_seed, relax_periods=40,
                 omega_range=(0.4, 1.4)):
    """Fold frequencies of the locked branch on either side of params.omega."""
    het = Heterogeneity.draw(params.n_osc, seed=het_seed)
    fp = newton_fixed_point(
        relaxed_guess(default_rough_guess(coarse.q), params, het,
                      periods=relax_periods),
        params, coarse)
    cfg = ContinuationConfig(initial_step=0.02, max_step=0.06, max_points=200)
    edges = []
    for direction in (-1, 1):
        branch = continue_branch(
            fp, params, "omega",
            ContinuationConfig(initial_step=0.02, max_step=0.06,
                               max_points=200, direction=direction),
            coarse=coarse, param_range={"omega": omega_range},
            stop_at_fold=True)
        folds = locate_folds(branch, params, cfg, coarse=coarse)
        if not folds:
            raise NumericalError(
                f"no fold toward direction {direction} "
                f"(terminated: {branch.termination.reason})")
        edges.append(folds[0].active_params["omega"])
    return tuple(sorted(edges))


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--amplitudes", nargs="+", type=float,
                    default=[0.1, 0.25, 0.5, 0.75, 1.0])
    ap.add_argument("--beta", type=float, default=0.0)
    ap.add_argument("--n-osc", type=int, default=1)
    ap.add_argument("--order", type=int, default=0, help="chaos order q")
    ap.add_argument("--realizations", type=int, default=1)
    ap.add_argument("--omega", type=float, default=0.85,
                    help="starting frequency inside the tongue")
    ap.add_argument("--base-seed", type=int, default=101)
    ap.add_argument("--het-seed", type=int, default=11)
    ap.add_argument("--out", default="results/tongue_scan.csv")
    args = ap.parse_args()

    coarse = CoarseMapConfig.default(q=args.order, r=args.realizations,
                                     base_seed=args.base_seed)
    rows = []
    for amp in args.amplitudes:
        params = ModelParams(phi=1.0, beta=args.beta, epsilon=1.0,
                             amplitude=amp, omega=args.omega,
                             n_osc=args.n_osc)
        tic = time.perf_counter()
        try:
            left, right = tongue_edges(params, coarse, args.het_seed)
        except NumericalError as exc:
            print(f"A = {amp}: {exc}", file=sys.stderr)
            continue
        rows.append((amp, left, right, right - left))
        print(f"A = {amp}: [{left:.6f}, {right:.6f}] "
              f"width {right - left:.6f} ({time.perf_counter() - tic:.1f} s)")

    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["amplitude", "omega_left", "omega_right", "width"])
        writer.writerows(rows)
    print(f"wrote {args.out}")
    return 0 if rows else 3


if __name__ == "__main__":
    sys.exit(main())
