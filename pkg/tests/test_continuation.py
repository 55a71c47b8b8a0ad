"""Continuation, fold and torus detection on maps with known answers.

The synthetic maps have analytically known branches and bifurcation sets, so
every assertion here has a closed-form oracle; the real system is exercised
by the acceptance suite.
"""

import math
from dataclasses import dataclass

import numpy as np
import pytest

from vdpchaos import (BranchPoint, CallableMapEvaluator, ChaosCoeffs,
                      CoarseMapConfig, ContinuationConfig, DesyncPolicy,
                      DomainError, ModelParams, NotABifurcationError,
                      ResonanceAmbiguityError, SyncReport, continue_branch,
                      continue_fold_curve, continue_hopf_curve, detect_fold,
                      detect_hopf, fold_test, hopf_test, locate_folds,
                      locate_hopfs, newton_fixed_point)


@dataclass(frozen=True)
class TwoParams:
    p1: float = 0.0
    p2: float = 0.0


def quad_fold_map(z, p):
    """Fixed points z1 = +-sqrt(p1 + 0.5 p2), z2 = 0; fold on p1 = -0.5 p2."""
    return z + np.array([p.p1 + 0.5 * p.p2 - z[0] ** 2, -0.5 * z[1]])


def circle_map(z, p):
    """Fixed-point set is the circle z1^2 + p1^2 = 1 in (z1, p1), z2 = 0."""
    return z + np.array([z[0] ** 2 + p.p1 ** 2 - 1.0, -z[1]])


def rotation_map(z, p):
    """Linear focus: eigenvalues (1 + p1) exp(+-i (pi/3 + p2))."""
    th = math.pi / 3 + p.p2
    rot = np.array([[math.cos(th), -math.sin(th)],
                    [math.sin(th), math.cos(th)]])
    return (1.0 + p.p1) * (rot @ z)


def fp(z_vec, params, func, fd=1e-7):
    ev = CallableMapEvaluator(func, fd_step=fd)
    cfg = CoarseMapConfig(q=0, realization_seeds=(0,))
    return newton_fixed_point(ChaosCoeffs.from_vector(np.asarray(z_vec)),
                              params, cfg, evaluator=ev), ev


class TestConfigValidation:
    def test_step_ordering_enforced(self):
        with pytest.raises(DomainError):
            ContinuationConfig(initial_step=0.5, max_step=0.1)
        with pytest.raises(DomainError):
            ContinuationConfig(min_step=0.0)
        with pytest.raises(DomainError):
            ContinuationConfig(direction=0)

    def test_free_param_must_exist(self):
        start, ev = fp([0.9, 0.0], TwoParams(p1=0.6, p2=0.4), quad_fold_map)
        with pytest.raises(DomainError):
            continue_branch(start, TwoParams(p1=0.6, p2=0.4), "nope",
                            ContinuationConfig(), coarse=ev)

    def test_omega_continuation_needs_forcing(self):
        params = ModelParams(amplitude=0.0, n_osc=1)
        start, ev = fp([0.9, 0.0], TwoParams(p1=0.6, p2=0.4), quad_fold_map)
        with pytest.raises(DomainError, match="amplitude"):
            continue_branch(start, params, "omega", ContinuationConfig(),
                            coarse=ev)


class TestBranchContinuation:
    def test_follows_parabola_around_the_fold(self):
        params = TwoParams(p1=0.6, p2=0.4)
        start, ev = fp([np.sqrt(0.8), 0.0], params, quad_fold_map)
        cfg = ContinuationConfig(initial_step=0.05, max_step=0.1,
                                 max_points=60, direction=-1)
        branch = continue_branch(start, params, "p1", cfg, coarse=ev)
        assert branch.termination.reason == "max-points"
        for pt in branch.points:
            z1 = pt.z.to_vector()[0]
            p1 = pt.active_params["p1"]
            assert abs(p1 + 0.2 - z1**2) < 1e-6  # on the fixed-point set
        # the branch must have rounded the fold: both signs of z1 present
        z1s = [pt.z.to_vector()[0] for pt in branch.points]
        assert min(z1s) < -0.3 and max(z1s) > 0.3
        # stability flips across the fold
        stables = [pt.stable for pt in branch.points]
        assert True in stables and False in stables

    def test_fold_location_and_eigenvalue(self):
        params = TwoParams(p1=0.6, p2=0.4)
        start, ev = fp([np.sqrt(0.8), 0.0], params, quad_fold_map)
        cfg = ContinuationConfig(initial_step=0.05, max_step=0.1,
                                 max_points=60, direction=-1)
        branch = continue_branch(start, params, "p1", cfg, coarse=ev)
        folds = locate_folds(branch, params, cfg, coarse=ev)
        assert len(folds) == 1
        fold = folds[0]
        assert fold.active_params["p1"] == pytest.approx(-0.2, abs=1e-6)
        assert fold.z.to_vector()[0] == pytest.approx(0.0, abs=1e-5)
        assert np.min(np.abs(fold.eigenvalues - 1.0)) < 1e-6

    def test_stop_at_fold_brackets_and_halts(self):
        params = TwoParams(p1=0.6, p2=0.4)
        start, ev = fp([np.sqrt(0.8), 0.0], params, quad_fold_map)
        cfg = ContinuationConfig(initial_step=0.05, max_step=0.1,
                                 max_points=60, direction=-1)
        branch = continue_branch(start, params, "p1", cfg, coarse=ev,
                                 stop_at_fold=True)
        assert branch.termination.reason == "stop-condition"
        a, b = branch.points[-2], branch.points[-1]
        assert a.test_fold * b.test_fold < 0
        folds = locate_folds(branch, params, cfg, coarse=ev)
        assert len(folds) == 1
        assert folds[0].active_params["p1"] == pytest.approx(-0.2, abs=1e-6)

    def test_closed_curve_detected(self):
        params = TwoParams(p1=0.0)
        start, ev = fp([1.0, 0.0], params, circle_map)
        cfg = ContinuationConfig(initial_step=0.05, max_step=0.1,
                                 max_points=300)
        branch = continue_branch(start, params, "p1", cfg, coarse=ev)
        assert branch.termination.reason == "closed-curve"
        for pt in branch.points:
            z1 = pt.z.to_vector()[0]
            p1 = pt.active_params["p1"]
            assert abs(z1**2 + p1**2 - 1.0) < 1e-6

    def test_parameter_boundary_termination(self):
        params = TwoParams(p1=0.6, p2=0.4)
        start, ev = fp([np.sqrt(0.8), 0.0], params, quad_fold_map)
        cfg = ContinuationConfig(initial_step=0.05, max_step=0.1,
                                 max_points=200, direction=1)
        branch = continue_branch(start, params, "p1", cfg, coarse=ev,
                                 param_range={"p1": (None, 1.5)})
        assert branch.termination.reason == "parameter-boundary"
        assert max(pt.active_params["p1"] for pt in branch.points) <= 1.5

    def test_detect_fold_requires_sign_change(self):
        params = TwoParams(p1=0.6, p2=0.4)
        start, ev = fp([np.sqrt(0.8), 0.0], params, quad_fold_map)
        cfg = ContinuationConfig(initial_step=0.02, max_points=8, direction=-1)
        branch = continue_branch(start, params, "p1", cfg, coarse=ev)
        a, b = branch.points[0], branch.points[-1]
        assert a.test_fold * b.test_fold > 0
        with pytest.raises(NotABifurcationError):
            detect_fold(a, b, params, "p1", cfg, coarse=ev)


class TestFoldCurve:
    def test_traces_the_known_fold_line(self):
        params = TwoParams(p1=0.6, p2=0.4)
        start, ev = fp([np.sqrt(0.8), 0.0], params, quad_fold_map)
        cfg = ContinuationConfig(initial_step=0.05, max_step=0.1,
                                 max_points=40, direction=-1)
        branch = continue_branch(start, params, "p1", cfg, coarse=ev)
        fold = locate_folds(branch, params, cfg, coarse=ev)[0]

        curve = continue_fold_curve(fold, params, ("p1", "p2"), cfg, coarse=ev)
        assert len(curve.points) >= 10
        for pt in curve.points:
            p1, p2 = pt.active_params["p1"], pt.active_params["p2"]
            assert abs(p1 + 0.5 * p2) < 1e-6  # the fold line p1 = -p2/2
            assert np.min(np.abs(pt.eigenvalues - 1.0)) < 1e-4

    def test_respects_parameter_range(self):
        params = TwoParams(p1=0.6, p2=0.4)
        start, ev = fp([np.sqrt(0.8), 0.0], params, quad_fold_map)
        cfg = ContinuationConfig(initial_step=0.05, max_step=0.1,
                                 max_points=100, direction=-1)
        branch = continue_branch(start, params, "p1", cfg, coarse=ev)
        fold = locate_folds(branch, params, cfg, coarse=ev)[0]
        curve = continue_fold_curve(fold, params, ("p1", "p2"), cfg, coarse=ev,
                                    param_range={"p2": (-0.6, 0.6)})
        assert curve.termination.reason == "parameter-boundary"
        assert all(-0.6 <= pt.active_params["p2"] <= 0.6
                   for pt in curve.points)


def model_fold_map(z, p):
    """Fold line omega = 1 - 0.5 beta in real model parameters."""
    return z + np.array([(p.omega - 1.0) + 0.5 * p.beta - z[0] ** 2,
                         -0.5 * z[1]])


class TestDesyncPolicy:
    def _fake_classify(self, frac_of_beta):
        def classify(p, het, **kw):
            frac = frac_of_beta(p.beta)
            n = p.n_osc
            k = int(round(frac * n))
            return SyncReport(rotation_counts=np.ones(n, dtype=int),
                              modal_count=n - k, modal_tie=False,
                              cluster_indices=np.arange(n - k),
                              desync_indices=np.arange(n - k, n),
                              quiescent_indices=np.arange(0),
                              desync_fraction=frac,
                              cluster_locked_to_forcing=True,
                              observe_periods=kw.get("observe_periods", 100))
        return classify

    def _fold_start(self):
        params = ModelParams(phi=1.0, beta=0.4, epsilon=1.0, amplitude=0.5,
                             omega=1.2, n_osc=100)
        start, ev = fp([np.sqrt(0.4), 0.0], params, model_fold_map)
        cfg = ContinuationConfig(initial_step=0.05, max_step=0.1,
                                 max_points=60, direction=-1)
        branch = continue_branch(start, params, "omega", cfg, coarse=ev)
        fold = locate_folds(branch, params, cfg, coarse=ev)[0]
        return params, ev, cfg, fold

    def test_validation(self):
        with pytest.raises(DomainError):
            DesyncPolicy(threshold=0.0)
        with pytest.raises(DomainError):
            DesyncPolicy(check_every=-1)

    def test_monitoring_stops_at_breakdown(self, monkeypatch):
        params, ev, cfg, fold = self._fold_start()
        monkeypatch.setattr("vdpchaos.continuation.classify_synchrony",
                            self._fake_classify(
                                lambda b: 0.0 if b < 0.8 else 0.03))
        curve = continue_fold_curve(
            fold, params, ("omega", "beta"),
            ContinuationConfig(initial_step=0.05, max_step=0.1,
                               max_points=60),
            coarse=ev, param_range={"beta": (0.0, 3.0)},
            desync_policy=DesyncPolicy(check_every=1))
        assert curve.termination.reason == "physics-breakdown"
        assert curve.termination.desync_fraction == pytest.approx(0.03)
        # the offending point is kept: it is where the description died
        assert curve.points[-1].active_params["beta"] >= 0.8
        assert all(pt.active_params["beta"] < 0.9 for pt in curve.points)

    def test_no_monitoring_without_cadence(self, monkeypatch):
        params, ev, cfg, fold = self._fold_start()
        calls = []

        def classify(p, het, **kw):
            calls.append(p.beta)
            raise AssertionError("classification must not run")

        monkeypatch.setattr("vdpchaos.continuation.classify_synchrony",
                            classify)
        curve = continue_fold_curve(
            fold, params, ("omega", "beta"),
            ContinuationConfig(initial_step=0.05, max_step=0.1,
                               max_points=60),
            coarse=ev, param_range={"beta": (0.0, 1.5)},
            desync_policy=DesyncPolicy())
        assert curve.termination.reason == "parameter-boundary"
        assert not calls


class TestHopfDetection:
    def test_detects_torus_crossing_with_rotation_number(self):
        params = TwoParams(p1=-0.05, p2=0.1)
        start, ev = fp([0.0, 0.0], params, rotation_map)
        assert start.stable
        cfg = ContinuationConfig(initial_step=0.02, max_step=0.05,
                                 max_points=10, direction=1)
        branch = continue_branch(start, params, "p1", cfg, coarse=ev)
        hopfs = locate_hopfs(branch, params, cfg, coarse=ev)
        assert len(hopfs) == 1
        hopf = hopfs[0]
        assert hopf.active_params["p1"] == pytest.approx(0.0, abs=1e-6)
        assert hopf.theta == pytest.approx(math.pi / 3 + 0.1, abs=1e-6)
        crit = hopf.eigenvalues[np.argmax(hopf.eigenvalues.imag)]
        assert abs(abs(crit) - 1.0) < 1e-6

    def test_stability_flips_across_crossing(self):
        params = TwoParams(p1=-0.05, p2=0.1)
        start, ev = fp([0.0, 0.0], params, rotation_map)
        cfg = ContinuationConfig(initial_step=0.02, max_step=0.05,
                                 max_points=10, direction=1)
        branch = continue_branch(start, params, "p1", cfg, coarse=ev)
        stables = [pt.stable for pt in branch.points]
        assert stables[0] and not stables[-1]

    def test_same_sign_bracket_rejected(self):
        params = TwoParams(p1=-0.05, p2=0.1)
        start, ev = fp([0.0, 0.0], params, rotation_map)
        cfg = ContinuationConfig(initial_step=0.01, max_points=3, direction=-1)
        branch = continue_branch(start, params, "p1", cfg, coarse=ev)
        with pytest.raises(NotABifurcationError):
            detect_hopf(branch.points[0], branch.points[-1], params, "p1",
                        cfg, coarse=ev)

    def test_resonance_collapse_raises(self):
        # eigenvalues (1 + p) +- sqrt(0.005 - p^2): complex at the bracket
        # ends, real where the modulus test has its root
        def jordan_map(z, p):
            eps = 0.005 - p.p1**2
            mat = np.array([[1.0 + p.p1, 1.0], [eps, 1.0 + p.p1]])
            return mat @ z

        ev = CallableMapEvaluator(jordan_map, fd_step=1e-7)

        def point_at(p1):
            mat = np.array([[1.0 + p1, 1.0], [0.005 - p1**2, 1.0 + p1]])
            eigs = np.linalg.eigvals(mat)
            return BranchPoint(active_params={"p1": p1},
                               z=ChaosCoeffs.from_vector(np.zeros(2)),
                               eigenvalues=eigs,
                               stable=bool(np.all(np.abs(eigs) < 1)),
                               test_fold=fold_test(mat),
                               test_hopf=hopf_test(eigs))

        a, b = point_at(-0.1), point_at(0.1)
        assert a.test_hopf < 0 < b.test_hopf
        with pytest.raises(ResonanceAmbiguityError):
            detect_hopf(a, b, TwoParams(), "p1", ContinuationConfig(),
                        coarse=ev)


class TestHopfCurve:
    def test_traces_unit_modulus_line_with_monotone_theta(self):
        params = TwoParams(p1=-0.05, p2=0.1)
        start, ev = fp([0.0, 0.0], params, rotation_map)
        cfg = ContinuationConfig(initial_step=0.02, max_step=0.06,
                                 max_points=40, direction=1)
        branch = continue_branch(start, params, "p1", cfg, coarse=ev)
        hopf = locate_hopfs(branch, params, cfg, coarse=ev)[0]

        curve = continue_hopf_curve(hopf, params, ("p1", "p2"), cfg, coarse=ev,
                                    param_range={"p2": (-0.9, 0.9)})
        assert curve.termination.reason == "parameter-boundary"
        assert len(curve.points) >= 10
        assert curve.theta_monotone
        for pt in curve.points:
            assert abs(pt.active_params["p1"]) < 1e-6  # the curve p1 = 0
            assert pt.theta == pytest.approx(
                math.pi / 3 + pt.active_params["p2"], abs=1e-6)
            crit = pt.eigenvalues[np.argmax(pt.eigenvalues.imag)]
            assert abs(abs(crit) - 1.0) < 1e-4

    def test_requires_theta(self):
        params = TwoParams(p1=0.0, p2=0.1)
        start, ev = fp([0.0, 0.0], params, rotation_map)
        point = BranchPoint(active_params={"p1": 0.0},
                            z=start.z, eigenvalues=start.eigenvalues,
                            stable=start.stable, test_fold=0.1, test_hopf=0.0)
        with pytest.raises(DomainError, match="theta"):
            continue_hopf_curve(point, params, ("p1", "p2"),
                                ContinuationConfig(), coarse=ev)
