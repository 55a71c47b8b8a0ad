"""End-to-end acceptance checks, one numbered test per claim.

Each test prints a single PASS/FAIL line (run with -s to see them) and uses
the library exactly as a user would: no internals, no monkeypatching.  The
slow continuation runs share module-scoped fixtures so the suite stays inside
its wall-clock budget on one core.
"""

import math

import numpy as np
import pytest

from vdpchaos import (ChaosCoeffs, CoarseMapConfig, ContinuationConfig,
                      DesyncPolicy, Heterogeneity, ModelParams,
                      NumericalError, ProjectionSchedule, RealizationSource,
                      coarse_map, continue_branch, continue_fold_curve,
                      continue_hopf_curve, default_rough_guess, integrate,
                      lift, locate_folds, locate_hopfs,
                      measure_angular_frequency, measure_speedup,
                      newton_fixed_point, projective_integrate, relaxed_guess,
                      restrict, strobe_full, walkthrough_period)
from vdpchaos.diagnostics import correlation_snapshot


def _report(num: int, ok: bool, detail: str) -> None:
    print(f"\n[criterion {num:02d}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {num}: {detail}"


def _params(**kw) -> ModelParams:
    base = dict(phi=1.0, beta=0.0, epsilon=1.0, amplitude=0.5, omega=0.85,
                n_osc=1)
    base.update(kw)
    return ModelParams(**base)


# ---------------------------------------------------------------- 1


def test_01_single_oscillator_onset():
    """Quiescence just below the excitability threshold, angular frequency
    near 1 just above it (unforced, uncoupled, homogeneous)."""
    het = Heterogeneity(np.zeros(1))
    below = measure_angular_frequency(
        _params(phi=-0.1, epsilon=0.0, amplitude=0.0), het)
    above = measure_angular_frequency(
        _params(phi=0.01, epsilon=0.0, amplitude=0.0), het,
        settle_time=400.0, measure_time=800.0)
    ok = below is None and above is not None and abs(above - 1.0) < 0.02
    _report(1, ok, f"phi=-0.1 -> {below}, phi=0.01 -> omega {above}")


# ---------------------------------------------------------------- 2


def test_02_correlation_development():
    """Microscopic states collapse onto a low-order polynomial in mu within
    two forcing periods; the fit residual drops from ~1 to below 0.1."""
    params = _params(beta=0.1, n_osc=500)
    T = params.forcing_period
    res0, res2 = [], []
    for seed in range(10):
        het = Heterogeneity.draw(500, seed=seed)
        recs = correlation_snapshot(params, het, [0.0, 2.0 * T], q=1,
                                    init_seed=seed)
        res0.append(max(recs[0].residual_x, recs[0].residual_y))
        res2.append(max(recs[1].residual_x, recs[1].residual_y))
    med0 = float(np.median(res0))
    med2 = float(np.median(res2))
    ok = med2 < 0.1 and med0 > 0.5
    _report(2, ok, f"median residual {med0:.3f} at t=0 -> {med2:.4f} at t=2T")


# ---------------------------------------------------------------- 3


def test_03_restrict_lift_round_trip():
    """restrict(lift(Z)) recovers Z to 1e-10 relative, any order, any
    realization large enough to make the fit well posed."""
    rng = np.random.default_rng(42)
    worst = 0.0
    for q in (1, 2, 4):
        for _ in range(34):
            n = int(rng.integers(3 * (q + 1), 80))
            het = Heterogeneity.draw(n, seed=int(rng.integers(1 << 30)))
            z = ChaosCoeffs(a=rng.normal(size=q + 1), b=rng.normal(size=q + 1))
            back = restrict(lift(z, het), het, q)
            num = np.linalg.norm(back.to_vector() - z.to_vector())
            den = max(np.linalg.norm(z.to_vector()), 1e-30)
            worst = max(worst, num / den)
    ok = worst < 1e-10
    _report(3, ok, f"worst relative round-trip error {worst:.2e}")


# ---------------------------------------------------------------- 4


@pytest.fixture(scope="module")
def fig3_setup():
    params = _params(beta=0.5, n_osc=500)
    het = Heterogeneity.draw(500, seed=11)
    z0 = restrict(
        strobe_full(lift(default_rough_guess(2), het), params, het,
                    n_periods=20),
        het, 2)
    return params, het, z0


def test_04_projective_accuracy_and_crossover(fig3_setup):
    """A 3-step burst with a cubic fit and one projected step tracks direct
    integration to 1e-2 in the first-order coefficient, and some projection
    length gives speedup > 1."""
    params, het, z0 = fig3_setup
    dt = 0.005

    # single-realization mode for the accuracy comparison: both runs see the
    # same network, so the difference is pure projection error
    sched = ProjectionSchedule(dt=dt, n_inner=3, n_project=1, fit_order=3)
    proj = projective_integrate(z0, params, sched,
                                RealizationSource.fixed_realization(het),
                                duration=100.0)
    direct = projective_integrate(
        z0, params, ProjectionSchedule(dt=dt, n_inner=3, n_project=0),
        RealizationSource.fixed_realization(het), duration=100.0)
    da1 = np.interp(proj.times, direct.times, direct.a(1))
    err = float(np.max(np.abs(proj.a(1) - da1)))

    # crossover: speedup at a handful of projection lengths; existence only,
    # the value is hardware-dependent
    speedups = {}
    for n_project in (1, 10, 20, 40, 71):
        try:
            sp = measure_speedup(
                z0, params,
                ProjectionSchedule(dt=dt, n_inner=3, n_project=n_project),
                duration=30.0, seed=11)
        except NumericalError:
            continue
        speedups[n_project] = round(sp.speedup, 2)
    crossover = [n for n, s in speedups.items() if s > 1.0]
    ok = err < 1e-2 and len(crossover) > 0
    _report(4, ok, f"max |da1| = {err:.2e}; speedup>1 first at n_project = "
                   f"{min(crossover) if crossover else None} ({speedups})")


# ---------------------------------------------------------------- 5


def test_05_coarse_fixed_point_is_not_microscopic():
    """Newton closes the coarse map to 1e-8 while individual oscillators
    visibly fail to return after one period."""
    params = _params(beta=0.5, n_osc=500)
    coarse = CoarseMapConfig.default(q=1, r=1, base_seed=11)
    het = Heterogeneity.draw(500, seed=11)
    fp = newton_fixed_point(relaxed_guess(default_rough_guess(1), params, het,
                                          periods=40),
                            params, coarse)
    state = lift(fp.z, het)
    once = strobe_full(state.copy(), params, het, n_periods=1)
    defect = float(np.max(np.abs(once.x - state.x)))
    ok = fp.residual < 1e-8 and defect > 1e-3
    _report(5, ok, f"coarse residual {fp.residual:.2e}, "
                   f"max one-period |dx| = {defect:.3f}")


# ---------------------------------------------------------------- 6 / 7


def _tongue_edges(params, coarse, guess_q, *, relax_periods=40,
                  het_seed=101, omega_range=(0.5, 1.3)):
    """Both fold frequencies of the primary tongue around params.omega."""
    het = Heterogeneity.draw(params.n_osc, seed=het_seed)
    fp = newton_fixed_point(
        relaxed_guess(default_rough_guess(guess_q), params, het,
                      periods=relax_periods),
        params, coarse)
    cfg = ContinuationConfig(initial_step=0.02, max_step=0.06, max_points=150)
    edges = []
    for direction in (1, -1):
        branch = continue_branch(fp, params, "omega",
                                 ContinuationConfig(
                                     initial_step=0.02, max_step=0.06,
                                     max_points=150, direction=direction),
                                 coarse=coarse,
                                 param_range={"omega": omega_range},
                                 stop_at_fold=True)
        folds = locate_folds(branch, params, cfg, coarse=coarse)
        assert folds, f"no fold toward direction {direction}"
        edges.append(folds[0].active_params["omega"])
    lo, hi = sorted(edges)
    return lo, hi


@pytest.fixture(scope="module")
def tongue_homogeneous():
    params = _params(n_osc=1)
    coarse = CoarseMapConfig.default(q=0, r=1, base_seed=101)
    return _tongue_edges(params, coarse, 0)


@pytest.fixture(scope="module")
def tongue_heterogeneous():
    params = _params(beta=0.5, n_osc=200)
    coarse = CoarseMapConfig.default(q=2, r=20, base_seed=101)
    return _tongue_edges(params, coarse, 2, het_seed=11)


def test_06_heterogeneity_shifts_tongue(tongue_homogeneous,
                                        tongue_heterogeneous):
    """Averaged over realizations, heterogeneity moves both tongue edges to
    lower frequency."""
    lo0, hi0 = tongue_homogeneous
    lo1, hi1 = tongue_heterogeneous
    ok = lo1 < lo0 and hi1 < hi0
    _report(6, ok, f"beta=0 edges ({lo0:.4f}, {hi0:.4f}); "
                   f"beta=0.5 edges ({lo1:.4f}, {hi1:.4f})")


def test_07_tongue_narrows_at_lower_amplitude(tongue_homogeneous,
                                              tongue_heterogeneous):
    """Halving the forcing amplitude narrows the tongue for both the single
    oscillator and the heterogeneous network."""
    lo_s, hi_s = _tongue_edges(
        _params(amplitude=0.25, n_osc=1),
        CoarseMapConfig.default(q=0, r=1, base_seed=101), 0)
    width_single_quarter = hi_s - lo_s
    width_single_half = tongue_homogeneous[1] - tongue_homogeneous[0]

    lo_n, hi_n = _tongue_edges(
        _params(amplitude=0.25, beta=0.5, n_osc=200),
        CoarseMapConfig.default(q=2, r=20, base_seed=101), 2, het_seed=11)
    width_net_quarter = hi_n - lo_n
    width_net_half = tongue_heterogeneous[1] - tongue_heterogeneous[0]

    ok = (width_single_quarter < width_single_half
          and width_net_quarter < width_net_half)
    _report(7, ok,
            f"single: width(A=0.25) {width_single_quarter:.4f} < "
            f"width(A=0.5) {width_single_half:.4f}; network: "
            f"{width_net_quarter:.4f} < {width_net_half:.4f}")


# ---------------------------------------------------------------- 8


def test_08_breakdown_terminates_fold_curve():
    """Following the right tongue boundary to growing heterogeneity ends in a
    physics-breakdown record once ~1% of oscillators leave the cluster."""
    params = _params(beta=0.5, n_osc=500)
    coarse = CoarseMapConfig.default(q=1, r=20, base_seed=101)
    het = Heterogeneity.draw(500, seed=101)
    fp = newton_fixed_point(relaxed_guess(default_rough_guess(1), params, het,
                                          periods=40),
                            params, coarse)
    cfg = ContinuationConfig(initial_step=0.02, max_step=0.06, max_points=150)
    branch = continue_branch(fp, params, "omega", cfg, coarse=coarse,
                             param_range={"omega": (0.5, 1.3)},
                             stop_at_fold=True)
    fold = locate_folds(branch, params, cfg, coarse=coarse)[0]

    curve = continue_fold_curve(
        fold, params, ("omega", "beta"),
        ContinuationConfig(initial_step=0.03, max_step=0.08, max_points=100),
        coarse=coarse,
        param_range={"omega": (0.5, 1.3), "beta": (0.0, 1.8)},
        desync_policy=DesyncPolicy(seed=11, check_every=1))
    term = curve.termination
    beta_end = curve.points[-1].active_params["beta"]
    frac = term.desync_fraction
    ok = (term.reason == "physics-breakdown" and frac is not None
          and 0.005 <= frac <= 0.02 and 0.9 <= beta_end <= 1.5)
    _report(8, ok, f"terminated '{term.reason}' at beta {beta_end:.3f} with "
                   f"desync fraction {frac}")


# ---------------------------------------------------------------- 9


def test_09_four_folds_on_cusp_slice():
    """At phi=0.8 the single-oscillator branch crosses four folds: the slice
    passes under two cusps."""
    params = _params(phi=0.8, n_osc=1)
    coarse = CoarseMapConfig.default(q=0, r=1, base_seed=101)
    het = Heterogeneity(np.zeros(1))
    fp = newton_fixed_point(relaxed_guess(default_rough_guess(0), params, het,
                                          periods=40),
                            params, coarse)
    cfg = ContinuationConfig(initial_step=0.02, max_step=0.04, max_points=400)
    omegas = []
    for direction in (1, -1):
        branch = continue_branch(
            fp, params, "omega",
            ContinuationConfig(initial_step=0.02, max_step=0.04,
                               max_points=400, direction=direction),
            coarse=coarse, param_range={"omega": (0.3, 1.6)})
        for f in locate_folds(branch, params, cfg, coarse=coarse):
            omegas.append(f.active_params["omega"])
    dedup = []
    for om in sorted(omegas):
        if not dedup or om - dedup[-1] > 1e-6:
            dedup.append(om)
    ok = len(dedup) == 4
    _report(9, ok, f"fold frequencies {[round(om, 5) for om in dedup]}")


# ---------------------------------------------------------------- 10


def test_10_hopf_curve_and_torus_birth():
    """The torus curve near the left cusp spans rotation numbers (0, pi),
    stays on the unit circle, and crossing it with decreasing omega births an
    invariant circle: excursion grows, then saturates."""
    params = _params(phi=0.72, n_osc=1)
    coarse = CoarseMapConfig.default(q=0, r=1, base_seed=101)
    het = Heterogeneity(np.zeros(1))
    fp = newton_fixed_point(relaxed_guess(default_rough_guess(0), params, het,
                                          periods=40),
                            params, coarse)
    scan_cfg = ContinuationConfig(initial_step=0.01, max_step=0.02,
                                  max_points=300, direction=-1)
    branch = continue_branch(fp, params, "omega", scan_cfg, coarse=coarse,
                             param_range={"omega": (0.3, 1.3)},
                             stop_at_hopf=True)
    hopf = locate_hopfs(branch, params, scan_cfg, coarse=coarse)[0]

    curve_cfg = ContinuationConfig(initial_step=0.01, max_step=0.03,
                                   max_points=300)
    rng = {"omega": (0.3, 1.3), "phi": (0.05, 3.0)}
    pieces = []
    for direction in (1, -1):
        pieces.append(continue_hopf_curve(
            hopf, params, ("omega", "phi"),
            ContinuationConfig(initial_step=0.01, max_step=0.03,
                               max_points=300, direction=direction),
            coarse=coarse, param_range=rng))
    thetas = []
    max_dev = 0.0
    for piece in pieces:
        assert piece.theta_monotone, "theta not monotone along the curve"
        thetas.extend(pt.theta for pt in piece.points)
        for pt in piece.points:
            max_dev = max(max_dev, float(
                np.max(np.abs(np.abs(pt.eigenvalues) - 1.0))))
    lo, hi = min(thetas), max(thetas)
    endpoints_ok = lo < 0.05 and hi > math.pi - 0.05
    circle_ok = max_dev < 1e-4

    # cross at the curve midpoint (theta closest to pi/2), stepping omega down
    all_pts = [pt for piece in pieces for pt in piece.points]
    mid = min(all_pts, key=lambda pt: abs(pt.theta - math.pi / 2))
    om_m = mid.active_params["omega"]
    phi_m = mid.active_params["phi"]
    p_mid = _params(phi=phi_m, omega=om_m, n_osc=1)
    z = mid.z
    for om in np.linspace(om_m, om_m - 0.002, 9)[1:]:
        p_mid = _params(phi=phi_m, omega=float(om), n_osc=1)
        z = newton_fixed_point(z, p_mid, coarse).z
    zstar = z.to_vector()
    w = zstar + np.array([1e-4] + [0.0] * (zstar.size - 1))
    radii = []
    cur = ChaosCoeffs.from_vector(w)
    for _ in range(800):
        cur = coarse_map(cur, p_mid, het)
        radii.append(float(np.linalg.norm(cur.to_vector() - zstar)))
    radii = np.asarray(radii)
    growth = radii.max() / radii[0]
    late = radii[3 * radii.size // 4:]
    saturated = late.max() <= 1.05 * radii.max()
    torus_ok = (np.all(np.isfinite(radii)) and growth > 50.0 and saturated
                and radii.max() < 1.0)
    ok = endpoints_ok and circle_ok and torus_ok
    _report(10, ok,
            f"theta spans ({lo:.4f}, {hi:.4f}), unit-circle dev {max_dev:.1e}"
            f"; crossing at (omega {om_m:.4f}, phi {phi_m:.4f}): excursion "
            f"x{growth:.0f} to {radii.max():.3f}, saturated {saturated}")


# ---------------------------------------------------------------- 11


def test_11_walkthrough_scaling(tongue_homogeneous):
    """Outside the right fold the slow slip period scales like the inverse
    square root of the detuning over a decade."""
    _, omega_star = tongue_homogeneous
    params = _params(n_osc=1)
    het = Heterogeneity(np.zeros(1))
    distances = np.logspace(-4, -3, 7)
    ests = walkthrough_period(params, het, omega_star,
                              omega_star + distances, q=0,
                              settle_periods=20, max_periods=4000)
    pts = [(e.distance, e.period) for e in ests if e.period is not None]
    assert len(pts) >= 5, "too few resolved walkthrough periods"
    d, p = np.array(pts).T
    slope = float(np.polyfit(np.log10(d), np.log10(p), 1)[0])
    ok = abs(slope + 0.5) < 0.1
    _report(11, ok, f"log-log slope {slope:.3f} over distances "
                    f"[{d.min():.1e}, {d.max():.1e}] ({len(pts)} points)")


# ---------------------------------------------------------------- 12


def test_12_coarse_map_is_lift_integrate_restrict():
    """The packaged coarse map agrees with manually strobing the full system
    and restricting, at high order."""
    params = _params(beta=0.3, n_osc=300)
    het = Heterogeneity.draw(300, seed=5)
    rng = np.random.default_rng(3)
    # decaying mode amplitudes keep the lifted states in the region the
    # integrator can take at this step size (high Hermite modes have large
    # values at the tails of the mu sample)
    scales = 0.5 * 0.3 ** np.arange(5)
    worst = 0.0
    for _ in range(5):
        z = ChaosCoeffs(a=rng.normal(size=5) * scales,
                        b=rng.normal(size=5) * scales)
        via_map = coarse_map(z, params, het).to_vector()
        full = integrate(lift(z, het), params, het,
                         duration=params.forcing_period)
        via_hand = restrict(full, het, 4).to_vector()
        worst = max(worst, float(np.max(np.abs(via_map - via_hand))))
    ok = worst < 1e-6
    _report(12, ok, f"max coordinate difference {worst:.2e}")
