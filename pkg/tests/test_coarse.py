"""Coarse stroboscopic map, averaging engine, Newton fixed points."""

from dataclasses import dataclass

import numpy as np
import pytest

from vdpchaos import (CallableMapEvaluator, ChaosCoeffs, CoarseEvaluator,
                      CoarseMapConfig, DomainError, Heterogeneity, ModelParams,
                      NewtonError, SingularJacobianError, averaged_map,
                      coarse_jacobian, coarse_map, default_rough_guess, lift,
                      newton_fixed_point, relaxed_guess, restrict, strobe_full)


@dataclass(frozen=True)
class ToyParams:
    lam: float = 0.5
    offset: float = 1.0


class TestCoarseMap:
    def test_composition_definition(self, small_net_params, small_net_het):
        z = ChaosCoeffs(a=np.array([0.4, 0.1]), b=np.array([-0.2, 0.05]))
        got = coarse_map(z, small_net_params, small_net_het)
        state = lift(z, small_net_het, t=0.0)
        mapped = strobe_full(state, small_net_params, small_net_het)
        ref = restrict(mapped, small_net_het, 1)
        np.testing.assert_allclose(got.to_vector(), ref.to_vector(), rtol=1e-13)

    def test_high_order_map_tracks_full_trajectory(self):
        # with q = 4 the slaved state is inside the expansion span, so
        # iterating the coarse map matches restricting the full trajectory
        params = ModelParams(phi=1.0, beta=0.3, epsilon=1.0, amplitude=0.5,
                             omega=0.85, n_osc=100)
        het = Heterogeneity.draw(100, seed=12)
        state = strobe_full(lift(default_rough_guess(4), het), params, het,
                            n_periods=30)
        z = restrict(state, het, 4)
        full = state
        for k in range(3):
            z = coarse_map(z, params, het)
            full = strobe_full(full, params, het)
            ref = restrict(full, het, 4)
            err = np.max(np.abs(z.to_vector() - ref.to_vector()))
            assert err < 1e-4, f"period {k}: {err}"

    def test_requires_positive_omega(self, small_net_het):
        params = ModelParams(omega=-1.0, n_osc=60)
        z = ChaosCoeffs(a=np.array([0.1, 0.0]), b=np.array([0.0, 0.0]))
        with pytest.raises(DomainError):
            coarse_map(z, params, small_net_het)


class TestAveragedMap:
    def test_equals_mean_of_single_realization_maps(self):
        params = ModelParams(phi=1.0, beta=0.4, epsilon=1.0, amplitude=0.5,
                             omega=0.85, n_osc=50)
        cfg = CoarseMapConfig(q=1, realization_seeds=(3, 17, 29))
        z = ChaosCoeffs(a=np.array([0.3, 0.05]), b=np.array([0.1, -0.02]))
        got = averaged_map(z, params, cfg)
        members = [coarse_map(z, params, Heterogeneity.draw(50, s)).to_vector()
                   for s in cfg.realization_seeds]
        np.testing.assert_allclose(got.to_vector(),
                                   np.mean(members, axis=0), rtol=1e-10)

    def test_deterministic_across_instances(self):
        params = ModelParams(beta=0.2, n_osc=40)
        cfg = CoarseMapConfig(q=1, realization_seeds=(0, 1, 2, 3))
        z = ChaosCoeffs(a=np.array([0.2, 0.0]), b=np.array([0.0, 0.0]))
        one = averaged_map(z, params, cfg).to_vector()
        two = averaged_map(z, params, cfg).to_vector()
        assert np.array_equal(one, two)

    def test_batched_groups_match_sequential_calls(self):
        # the batching engine must not change results when items share kernels
        cfg = CoarseMapConfig(q=1, realization_seeds=(0, 1))
        ev = CoarseEvaluator(cfg)
        z1 = np.array([0.3, 0.0, 0.1, 0.0])
        z2 = np.array([0.5, 0.1, -0.1, 0.02])
        pa = ModelParams(phi=1.0, beta=0.3, n_osc=30)
        pb = ModelParams(phi=0.9, beta=0.25, n_osc=30)  # same kernel group
        pc = ModelParams(phi=1.0, beta=0.3, omega=0.9, n_osc=30)  # new group
        batch = ev.map_many([(z1, pa), (z2, pb), (z1, pc)])
        singles = np.stack([ev.map(z1, pa), ev.map(z2, pb), ev.map(z1, pc)])
        np.testing.assert_allclose(batch, singles, rtol=1e-13)

    def test_dimension_mismatch_rejected(self):
        cfg = CoarseMapConfig(q=2, realization_seeds=(0,))
        with pytest.raises(DomainError):
            averaged_map(ChaosCoeffs(a=np.array([0.1, 0.0]),
                                     b=np.array([0.0, 0.0])),
                         ModelParams(n_osc=30), cfg)

    def test_config_validation(self):
        with pytest.raises(DomainError):
            CoarseMapConfig(q=-1)
        with pytest.raises(DomainError):
            CoarseMapConfig(realization_seeds=())
        with pytest.raises(DomainError):
            CoarseMapConfig(realization_seeds=(1, 1))
        assert CoarseMapConfig.default(q=2, r=5, base_seed=10).realization_seeds \
            == (10, 11, 12, 13, 14)


class TestJacobian:
    def test_recovers_linear_map(self):
        mat = np.array([[0.3, -0.2, 0.0, 0.1],
                        [0.05, 0.7, 0.0, 0.0],
                        [0.0, 0.0, 0.9, 0.2],
                        [0.1, 0.0, -0.3, 0.4]])

        ev = CallableMapEvaluator(lambda z, p: mat @ z + 1.0)
        jac = ev.jacobian(np.array([0.3, -0.5, 1.0, 0.0]), ToyParams())
        np.testing.assert_allclose(jac, mat, atol=1e-8)

    def test_common_random_numbers_give_smooth_entries(self):
        # with frozen realizations the averaged map is smooth, so central
        # differences at nearby points agree to many digits
        params = ModelParams(phi=1.0, beta=0.3, epsilon=1.0, amplitude=0.5,
                             omega=0.85, n_osc=40)
        cfg = CoarseMapConfig(q=1, realization_seeds=(0, 1, 2))
        z = ChaosCoeffs(a=np.array([0.4, 0.0]), b=np.array([0.0, 0.0]))
        j1 = coarse_jacobian(z, params, cfg)
        z2 = ChaosCoeffs(a=np.array([0.4 + 1e-7, 0.0]), b=np.array([0.0, 0.0]))
        j2 = coarse_jacobian(z2, params, cfg)
        assert np.max(np.abs(j1 - j2)) < 1e-4


class TestNewton:
    def test_converges_on_contraction(self):
        ev = CallableMapEvaluator(lambda z, p: p.lam * z + p.offset)
        cfg = CoarseMapConfig(q=0, realization_seeds=(0,))
        z0 = ChaosCoeffs(a=np.array([10.0]), b=np.array([-3.0]))
        fp = newton_fixed_point(z0, ToyParams(lam=0.5, offset=1.0), cfg,
                                evaluator=ev)
        np.testing.assert_allclose(fp.z.to_vector(), [2.0, 2.0], atol=1e-8)
        assert fp.stable
        np.testing.assert_allclose(sorted(fp.eigenvalues.real), [0.5, 0.5],
                                   atol=1e-6)

    def test_unstable_fixed_point_flagged(self):
        ev = CallableMapEvaluator(lambda z, p: 2.0 * z)
        cfg = CoarseMapConfig(q=0, realization_seeds=(0,))
        fp = newton_fixed_point(ChaosCoeffs(a=np.array([0.3]),
                                            b=np.array([-0.2])),
                                ToyParams(), cfg, evaluator=ev)
        np.testing.assert_allclose(fp.z.to_vector(), [0.0, 0.0], atol=1e-9)
        assert not fp.stable

    def test_exact_guess_converges_immediately(self):
        ev = CallableMapEvaluator(lambda z, p: 0.5 * z + 1.0)
        cfg = CoarseMapConfig(q=0, realization_seeds=(0,))
        fp = newton_fixed_point(ChaosCoeffs(a=np.array([2.0]),
                                            b=np.array([2.0])),
                                ToyParams(), cfg, evaluator=ev)
        assert fp.iterations == 0
        assert len(fp.residual_history) == 1

    def test_singular_jacobian_names_the_cure(self):
        # no fixed point anywhere and (J - I) = diag(2 z) vanishes at z = 0
        ev = CallableMapEvaluator(lambda z, p: z + 1.0 + z**2)
        cfg = CoarseMapConfig(q=0, realization_seeds=(0,))
        with pytest.raises(SingularJacobianError, match="arclength"):
            newton_fixed_point(ChaosCoeffs(a=np.array([0.0]),
                                           b=np.array([0.0])),
                               ToyParams(), cfg, evaluator=ev)

    def test_nonconvergence_reports_history(self):
        # F(z) = z^3 - 2z + 2 puts Newton on the classic 0 <-> 1 two-cycle
        ev = CallableMapEvaluator(lambda z, p: z**3 - z + 2.0)
        cfg = CoarseMapConfig(q=0, realization_seeds=(0,), newton_max_iter=6)
        with pytest.raises(NewtonError, match="history"):
            newton_fixed_point(ChaosCoeffs(a=np.array([0.0]),
                                           b=np.array([0.0])),
                               ToyParams(), cfg, evaluator=ev)

    def test_real_system_fixed_point_from_relaxation(self, single_params,
                                                     single_het):
        cfg = CoarseMapConfig(q=0, realization_seeds=(0,))
        guess = relaxed_guess(default_rough_guess(0), single_params, single_het)
        fp = newton_fixed_point(guess, single_params, cfg)
        assert fp.residual < cfg.newton_tol
        assert fp.stable  # inside the locking tongue
