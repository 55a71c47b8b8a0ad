#!/usr/bin/env python3
"""Scaling of the slow modulation period just outside a tongue edge.

Past the fold at omega* the locked state disappears and the dynamics drifts
through the ghost, slipping one forcing cycle per modulation period.  The
period diverges like |omega - omega*|^(-1/2); this script measures it over
a decade of distances and fits the log-log slope.

    python3 scripts/walkthrough_slope.py --omega-star 0.98912
    python3 scripts/walkthrough_slope.py --locate --phi 1.0
"""

import argparse
import csv
import os
import sys

import numpy as np

from vdpchaos import (
    CoarseMapConfig,
    ContinuationConfig,
    Heterogeneity,
    ModelParams,
    continue_branch,
    default_rough_guess,
    locate_folds,
    newton_fixed_point,
    relaxed_guess,
    walkthrough_period,
)


def locate_right_edge(params, coarse, het):
    """Right fold frequency of the primary tongue at params."""
    fp = newton_fixed_point(
        relaxed_guess(default_rough_guess(coarse.q), params, het, periods=40),
        params, coarse)
    cfg = ContinuationConfig(initial_step=0.02, max_step=0.06, max_points=200)
    branch = continue_branch(fp, params, "omega", cfg, coarse=coarse,
                             param_range={"omega": (0.5, 1.3)},
                             stop_at_fold=True)
    folds = locate_folds(branch, params, cfg, coarse=coarse)
    if not folds:
        sys.exit(f"no fold found (terminated: {branch.termination.reason})")
    return folds[0].active_params["omega"]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--omega-star", type=float,
                    help="fold frequency; omit with --locate to compute it")
    ap.add_argument("--locate", action="store_true",
                    help="find the right tongue edge first")
    ap.add_argument("--phi", type=float, default=1.0)
    ap.add_argument("--beta", type=float, default=0.0)
    ap.add_argument("--n-osc", type=int, default=1)
    ap.add_argument("--order", type=int, default=0)
    ap.add_argument("--distances", type=float, nargs=2, default=[1e-4, 1e-3],
                    metavar=("MIN", "MAX"))
    ap.add_argument("--n-points", type=int, default=7)
    ap.add_argument("--max-periods", type=int, default=4000)
    ap.add_argument("--het-seed", type=int, default=101)
    ap.add_argument("--out", default="results/walkthrough.csv")
    args = ap.parse_args()

    params = ModelParams(phi=args.phi, beta=args.beta, epsilon=1.0,
                         amplitude=0.5, omega=0.85, n_osc=args.n_osc)
    het = Heterogeneity.draw(params.n_osc, seed=args.het_seed)

    omega_star = args.omega_star
    if omega_star is None:
        if not args.locate:
            ap.error("give --omega-star or --locate")
        coarse = CoarseMapConfig.default(q=args.order, r=1, base_seed=101)
        omega_star = locate_right_edge(params, coarse, het)
        print(f"right tongue edge at omega* = {omega_star:.10f}")

    distances = np.logspace(np.log10(args.distances[0]),
                            np.log10(args.distances[1]), args.n_points)
    estimates = walkthrough_period(params, het, omega_star,
                                   omega_star + distances, q=args.order,
                                   settle_periods=20,
                                   max_periods=args.max_periods)

    rows = [(e.omega, e.distance, e.period, e.n_slips, e.resolved)
            for e in estimates]
    for omega, dist, period, n_slips, resolved in rows:
        note = "" if resolved else "  (unresolved)"
        per = f"{period:.2f}" if period is not None else "n/a"
        print(f"omega = {omega:.8f}  dist = {dist:.2e}  "
              f"period = {per}  slips = {n_slips}{note}")

    good = [(d, p) for _, d, p, _, ok in rows if ok and p is not None]
    if len(good) >= 3:
        logd = np.log10([d for d, _ in good])
        logp = np.log10([p for _, p in good])
        slope = np.polyfit(logd, logp, 1)[0]
        print(f"log-log slope over {len(good)} resolved points: "
              f"{slope:.4f} (square-root scaling gives -0.5)")
    else:
        print("too few resolved points for a slope fit", file=sys.stderr)

    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["omega", "distance", "period", "n_slips", "resolved"])
        writer.writerows(rows)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
