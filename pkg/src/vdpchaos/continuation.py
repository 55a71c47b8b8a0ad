"""Pseudo-arclength continuation of coarse fixed points and their
codimension-one bifurcation curves.

All correctors are full Newton on bordered systems; the map enters only
through an evaluator's batched map_many, so one Newton iteration costs one
grouped kernel call regardless of how many finite-difference perturbations it
needs.  Jacobian-vector products inside the fold and torus systems are
directional differences (two map evaluations), never full Jacobians.

Termination is always explicit: every run ends in a TerminationRecord saying
why (max points, parameter boundary, closed curve, step underflow, or, when a
desynchronization policy is attached, physics breakdown of the coarse
description itself).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .chaos import ChaosCoeffs
from .coarse import (CoarseEvaluator, CoarseFixedPoint, CoarseMapConfig,
                     _EvaluatorBase)
from .diagnostics import classify_synchrony
from .errors import (ContinuationError, DomainError, NotABifurcationError,
                     NumericalError, ResonanceAmbiguityError)
from .network import Heterogeneity, ModelParams

_IMAG_TOL = 1e-9
_DEFAULT_BOUNDS = {"omega": (1e-6, None), "amplitude": (0.0, None)}


@dataclass(frozen=True)
class ContinuationConfig:
    """Stepping and corrector settings for all continuation runs."""

    initial_step: float = 0.02
    min_step: float = 1e-6
    max_step: float = 0.2
    corrector_tol: float = 1e-8
    corrector_max_iter: int = 25
    max_points: int = 300
    direction: int = 1

    def __post_init__(self):
        if not 0 < self.min_step <= self.initial_step <= self.max_step:
            raise DomainError(
                "need 0 < min_step <= initial_step <= max_step, got "
                f"{self.min_step}, {self.initial_step}, {self.max_step}")
        if self.corrector_tol <= 0:
            raise DomainError("corrector_tol must be > 0")
        if self.corrector_max_iter < 1 or self.max_points < 2:
            raise DomainError("corrector_max_iter >= 1 and max_points >= 2 required")
        if self.direction not in (1, -1):
            raise DomainError(f"direction must be +1 or -1, got {self.direction}")


@dataclass(frozen=True)
class DesyncPolicy:
    """When and how to declare that the coarse description itself broke down.

    When arclength steps underflow, the full system at the last accepted
    point is classified for synchrony; a desynchronized fraction at or above
    threshold means the stall is physics, not numerics.  With check_every
    set to k >= 1, every k-th accepted point is classified as well and the
    run ends with a physics-breakdown record as soon as the fraction reaches
    the threshold, whether or not the corrector is still converging: past
    that point the averaged map keeps producing fixed points, but they no
    longer describe a synchronized network.
    """

    threshold: float = 0.01
    settle_periods: int = 50
    observe_periods: int = 100
    seed: int = 0
    samples_per_period: int = 64
    check_every: int = 0

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise DomainError(
                f"threshold must be in (0, 1], got {self.threshold}")
        if self.check_every < 0:
            raise DomainError(
                f"check_every must be >= 0, got {self.check_every}")


@dataclass(eq=False)
class BranchPoint:
    """One accepted continuation point with its local stability data."""

    active_params: dict[str, float]
    z: ChaosCoeffs
    eigenvalues: np.ndarray
    stable: bool
    test_fold: float
    test_hopf: float
    theta: float | None = None


@dataclass(frozen=True)
class TerminationRecord:
    """Why a continuation run stopped."""

    reason: str
    detail: str = ""
    desync_fraction: float | None = None


@dataclass(eq=False)
class Branch:
    """An ordered set of continuation points plus the reason the run ended."""

    points: list[BranchPoint]
    termination: TerminationRecord
    free_params: tuple[str, ...]
    theta_monotone: bool | None = None


def fold_test(jacobian: np.ndarray) -> float:
    """det(J - I): changes sign when a real eigenvalue crosses +1."""
    return float(np.linalg.det(jacobian - np.eye(jacobian.shape[0])))


def hopf_test(eigenvalues: np.ndarray) -> float:
    """Largest complex-pair modulus minus one; nan if no complex pair."""
    cplx = eigenvalues[np.abs(eigenvalues.imag) > _IMAG_TOL]
    if cplx.size == 0:
        return math.nan
    return float(np.max(np.abs(cplx)) - 1.0)


def _critical_rotation(eigenvalues: np.ndarray):
    """(modulus, theta) of the complex pair closest to the unit circle."""
    cplx = eigenvalues[eigenvalues.imag > _IMAG_TOL]
    if cplx.size == 0:
        return None
    lam = cplx[np.argmin(np.abs(np.abs(cplx) - 1.0))]
    return float(np.abs(lam)), float(np.angle(lam))


def _as_evaluator(coarse) -> _EvaluatorBase:
    if isinstance(coarse, CoarseMapConfig):
        return CoarseEvaluator(coarse)
    if isinstance(coarse, _EvaluatorBase):
        return coarse
    raise DomainError(f"cannot build a map evaluator from {type(coarse).__name__}")


def _bounds_for(name: str, param_range) -> tuple[float | None, float | None]:
    if param_range and name in param_range:
        return param_range[name]
    return _DEFAULT_BOUNDS.get(name, (None, None))


def _in_bounds(value: float, bounds) -> bool:
    lo, hi = bounds
    if lo is not None and value < lo:
        return False
    if hi is not None and value > hi:
        return False
    return True


def _set_params(template, names, values):
    return dataclasses.replace(template, **{n: float(v) for n, v in zip(names, values)})


def _check_free_params(params, names):
    for name in names:
        if not hasattr(params, name):
            raise DomainError(f"params has no parameter named {name!r}")
        if not isinstance(getattr(params, name), float):
            raise DomainError(f"parameter {name!r} is not a real scalar")
    amp = getattr(params, "amplitude", None)
    if amp == 0.0 and "omega" in names:
        raise DomainError(
            "continuation in omega with amplitude == 0 is outside the "
            "supported regime: without forcing there is no stroboscopic map "
            "to continue")


class _CorrectorFailure(Exception):
    pass


def _make_point(u, m, names, jac) -> BranchPoint:
    eigs = np.linalg.eigvals(jac)
    return BranchPoint(
        active_params={n: float(v) for n, v in zip(names, u[m:])},
        z=ChaosCoeffs.from_vector(u[:m]),
        eigenvalues=eigs,
        stable=bool(np.all(np.abs(eigs) < 1.0)),
        test_fold=fold_test(jac),
        test_hopf=hopf_test(eigs),
    )


def _fp_corrector(ev, pred, tan, m, names, template, tol, max_iter):
    """Newton on {h(z) - z = 0, tan . (u - pred) = 0}; returns (u, J, iters).

    The returned Jacobian is evaluated at the converged point, so eigenvalue
    data comes for free with every accepted point.
    """
    u = pred.copy()
    eye = np.eye(m)
    for it in range(max_iter):
        try:
            p = _set_params(template, names, u[m:])
            hz, jac, c = ev.newton_data(u[:m], p, names[0])
        except (NumericalError, DomainError) as err:
            raise _CorrectorFailure(str(err)) from err
        f = hz - u[:m]
        g = float(tan @ (u - pred))
        res = max(float(np.max(np.abs(f))), abs(g))
        if res < tol:
            return u, jac, it
        mat = np.zeros((m + 1, m + 1))
        mat[:m, :m] = jac - eye
        mat[:m, m] = c
        mat[m, :] = tan
        try:
            delta = np.linalg.solve(mat, -np.concatenate([f, [g]]))
        except np.linalg.LinAlgError as err:
            raise _CorrectorFailure("singular bordered system") from err
        if not np.all(np.isfinite(delta)) or np.max(np.abs(delta)) > 1e3:
            raise _CorrectorFailure("corrector step blew up")
        u = u + delta
    raise _CorrectorFailure(f"no convergence in {max_iter} iterations")


def _classify_at(template, names, u_param_values, policy):
    """Synchrony report for the full system at a point along a curve."""
    p = _set_params(template, names, u_param_values)
    het = Heterogeneity.draw(p.n_osc, policy.seed)
    return classify_synchrony(
        p, het, observe_periods=policy.observe_periods,
        settle_periods=policy.settle_periods,
        samples_per_period=policy.samples_per_period)


def _desync_termination(template, names, u_param_values, policy,
                        detail) -> TerminationRecord:
    """Decide physics-breakdown vs numerical-failure at a stalled curve end."""
    report = _classify_at(template, names, u_param_values, policy)
    if report.desync_fraction >= policy.threshold:
        return TerminationRecord(
            reason="physics-breakdown",
            detail=f"{detail}; desynchronized fraction "
                   f"{report.desync_fraction:.4f} >= {policy.threshold}",
            desync_fraction=report.desync_fraction)
    return TerminationRecord(
        reason="numerical-failure",
        detail=f"{detail}; desynchronized fraction "
               f"{report.desync_fraction:.4f} below {policy.threshold}",
        desync_fraction=report.desync_fraction)


def _run_curve(u0, make_residual_corrector, make_point_at, m_total, p_slice,
               names, template, config, param_range, desync_policy,
               first_tan_coord, stop_condition=None):
    """Generic pseudo-arclength driver shared by all curve types.

    make_residual_corrector(pred, tan) -> (u, payload, iters) or raises
    _CorrectorFailure; make_point_at(u, payload) -> BranchPoint.
    stop_condition(points) may return a detail string to end the run early.
    """
    bounds = [_bounds_for(n, param_range) for n in names]

    def param_ok(u):
        return all(_in_bounds(float(v), b) for v, b in zip(u[p_slice], bounds))

    # first step: natural continuation in the designated coordinate
    h = config.initial_step
    first = None
    while h >= config.min_step:
        pred = u0.copy()
        pred[first_tan_coord] += config.direction * h
        tan = np.zeros(m_total)
        tan[first_tan_coord] = 1.0
        if not param_ok(pred):
            raise ContinuationError(
                "first step leaves the parameter domain; flip direction or "
                "shrink initial_step")
        try:
            first = make_residual_corrector(pred, tan)
            break
        except _CorrectorFailure:
            h /= 2.0
    if first is None:
        raise ContinuationError(
            f"corrector failed down to min_step = {config.min_step} on the "
            "first step")
    u1, payload1, _ = first

    points = [make_point_at(u0, None), make_point_at(u1, payload1)]
    u_prev, u_curr = u0, u1
    tan0 = (u1 - u0) / np.linalg.norm(u1 - u0)
    ds = float(np.clip(np.linalg.norm(u1 - u0), config.min_step, config.max_step))
    max_excursion = 0.0

    while len(points) < config.max_points:
        tan = u_curr - u_prev
        tan /= np.linalg.norm(tan)
        accepted = None
        boundary = False
        last_failure = "corrector never ran"
        while ds >= config.min_step:
            pred = u_curr + ds * tan
            if not param_ok(pred):
                boundary = True
                break
            try:
                accepted = make_residual_corrector(pred, tan)
                break
            except _CorrectorFailure as err:
                last_failure = str(err)
                ds /= 2.0
        if boundary:
            return points, TerminationRecord(
                reason="parameter-boundary",
                detail=f"predictor left the domain of {names}")
        if accepted is None:
            detail = f"corrector stalled below min_step ({last_failure})"
            if desync_policy is not None and isinstance(template, ModelParams):
                return points, _desync_termination(
                    template, names, u_curr[p_slice], desync_policy, detail)
            return points, TerminationRecord(reason="min-step-underflow",
                                             detail=detail)
        u_new, payload, iters = accepted
        if not param_ok(u_new):
            return points, TerminationRecord(
                reason="parameter-boundary",
                detail=f"corrected point left the domain of {names}")
        points.append(make_point_at(u_new, payload))
        dist0 = float(np.linalg.norm(u_new - u0))
        # closure needs proximity AND matching travel direction: an open
        # branch folding back passes near the start on another sheet but
        # arrives with a different tangent
        if (len(points) >= 8 and dist0 < ds
                and max_excursion > 5.0 * config.initial_step
                and float(tan @ tan0) > 0.8):
            return points, TerminationRecord(
                reason="closed-curve",
                detail=f"returned to the start within {dist0:.3g}")
        if stop_condition is not None:
            detail = stop_condition(points)
            if detail is not None:
                return points, TerminationRecord(reason="stop-condition",
                                                 detail=detail)
        if (desync_policy is not None and desync_policy.check_every > 0
                and isinstance(template, ModelParams)
                and (len(points) - 2) % desync_policy.check_every == 0):
            report = _classify_at(template, names, u_new[p_slice],
                                  desync_policy)
            if report.desync_fraction >= desync_policy.threshold:
                vals = ", ".join(f"{n} = {float(v):.6g}" for n, v in
                                 zip(names, u_new[p_slice]))
                return points, TerminationRecord(
                    reason="physics-breakdown",
                    detail=(f"desynchronized fraction "
                            f"{report.desync_fraction:.4f} >= "
                            f"{desync_policy.threshold} at {vals}; the "
                            "single-cluster coarse description no longer "
                            "holds"),
                    desync_fraction=report.desync_fraction)
        max_excursion = max(max_excursion, dist0)
        u_prev, u_curr = u_curr, u_new
        if iters <= 3:
            ds = min(ds * 1.3, config.max_step)
    return points, TerminationRecord(
        reason="max-points", detail=f"reached max_points = {config.max_points}")


def continue_branch(start: CoarseFixedPoint, params, free_param: str,
                    config: ContinuationConfig, *, coarse,
                    param_range: dict | None = None,
                    stop_at_fold: bool = False,
                    stop_at_hopf: bool = False) -> Branch:
    """Continue a fixed-point branch of the averaged map in one parameter.

    start must be a converged fixed point at params.  The secant predictor
    and full-Newton corrector pass folds without special handling; every
    accepted point carries eigenvalues and the fold/torus test functions.
    With stop_at_fold (stop_at_hopf) the run ends as soon as the fold (torus)
    test changes sign, leaving the bracketing pair as the last two points.
    """
    ev = _as_evaluator(coarse)
    _check_free_params(params, (free_param,))
    names = (free_param,)
    z0 = start.z.to_vector()
    m = z0.size
    u0 = np.concatenate([z0, [getattr(params, free_param)]])

    def corrector(pred, tan):
        u, jac, iters = _fp_corrector(ev, pred, tan, m, names, params,
                                      config.corrector_tol,
                                      config.corrector_max_iter)
        return u, jac, iters

    def point_at(u, jac):
        if jac is None:
            jac = start.jacobian
        return _make_point(u, m, names, jac)

    stop = None
    if stop_at_fold or stop_at_hopf:
        def stop(points):
            a, b = points[-2], points[-1]
            if stop_at_fold and math.copysign(1.0, a.test_fold) != math.copysign(
                    1.0, b.test_fold):
                return "fold test changed sign"
            if (stop_at_hopf and math.isfinite(a.test_hopf)
                    and math.isfinite(b.test_hopf)
                    and math.copysign(1.0, a.test_hopf) != math.copysign(
                        1.0, b.test_hopf)):
                return "torus test changed sign"
            return None

    points, term = _run_curve(u0, corrector, point_at, m + 1, slice(m, m + 1),
                              names, params, config, param_range, None, m,
                              stop_condition=stop)
    return Branch(points=points, termination=term, free_params=names)


def locate_folds(branch: Branch, params, config: ContinuationConfig, *,
                 coarse, eig_tol: float = 1e-6) -> list[BranchPoint]:
    """Refine every sign change of det(J - I) along a branch."""
    name = branch.free_params[0]
    out = []
    for a, b in zip(branch.points[:-1], branch.points[1:]):
        if math.copysign(1.0, a.test_fold) != math.copysign(1.0, b.test_fold):
            out.append(detect_fold(a, b, params, name, config, coarse=coarse,
                                   eig_tol=eig_tol))
    return out


def locate_hopfs(branch: Branch, params, config: ContinuationConfig, *,
                 coarse, eig_tol: float = 1e-6) -> list[BranchPoint]:
    """Refine every sign change of the complex-pair modulus test."""
    name = branch.free_params[0]
    out = []
    for a, b in zip(branch.points[:-1], branch.points[1:]):
        if (math.isfinite(a.test_hopf) and math.isfinite(b.test_hopf)
                and math.copysign(1.0, a.test_hopf) != math.copysign(1.0, b.test_hopf)):
            out.append(detect_hopf(a, b, params, name, config, coarse=coarse,
                                   eig_tol=eig_tol))
    return out


def _refine_on_segment(point_a: BranchPoint, point_b: BranchPoint, params,
                       free_param, config, ev, crit_fn, test_fn, eig_tol,
                       max_iter=60):
    """Illinois-style root find of a test function between two branch points.

    crit_fn(eigs) -> scalar distance from criticality (0 at the bifurcation),
    test_fn(jac, eigs) -> signed test function.  Candidates are corrected
    back onto the branch before being evaluated, so the refined point is a
    genuine fixed point.
    """
    m = point_a.z.to_vector().size
    u_a = np.concatenate([point_a.z.to_vector(),
                          [point_a.active_params[free_param]]])
    u_b = np.concatenate([point_b.z.to_vector(),
                          [point_b.active_params[free_param]]])
    tan = u_b - u_a
    span = np.linalg.norm(tan)
    tan = tan / span

    def solve_at(s):
        pred = (1.0 - s) * u_a + s * u_b
        u, jac, _ = _fp_corrector(ev, pred, tan, m, (free_param,), params,
                                  config.corrector_tol,
                                  config.corrector_max_iter)
        eigs = np.linalg.eigvals(jac)
        return u, jac, eigs

    fa, fb = test_fn(None, point_a), test_fn(None, point_b)
    sa, sb = 0.0, 1.0
    best = None
    side = 0
    for _ in range(max_iter):
        s = (sa * fb - sb * fa) / (fb - fa)
        s = min(max(s, sa + 1e-4 * (sb - sa)), sb - 1e-4 * (sb - sa))
        u, jac, eigs = solve_at(s)
        dist = crit_fn(eigs)
        if best is None or dist < best[0]:
            best = (dist, u, jac, eigs)
        if dist < eig_tol:
            break
        fs = test_fn(jac, None)
        if math.copysign(1.0, fs) == math.copysign(1.0, fa):
            sa, fa = s, fs
            if side == -1:
                fb /= 2.0
            side = -1
        else:
            sb, fb = s, fs
            if side == 1:
                fa /= 2.0
            side = 1
    dist, u, jac, eigs = best
    if dist > 1e-4:
        raise NumericalError(
            f"bifurcation refinement stalled; best eigenvalue distance {dist:.3e}")
    return u, m, jac, eigs


def detect_fold(point_a: BranchPoint, point_b: BranchPoint, params,
                free_param: str, config: ContinuationConfig, *, coarse,
                eig_tol: float = 1e-6) -> BranchPoint:
    """Refine a fold bracketed by two branch points.

    Requires a sign change of det(J - I) across the bracket; returns the
    refined point, whose critical eigenvalue sits within eig_tol of +1.
    """
    ev = _as_evaluator(coarse)
    fa, fb = point_a.test_fold, point_b.test_fold
    if not (math.isfinite(fa) and math.isfinite(fb)) or fa * fb > 0:
        raise NotABifurcationError(
            f"no sign change of det(J - I) across the bracket: {fa:.3e} vs {fb:.3e}")

    def crit(eigs):
        return float(np.min(np.abs(eigs - 1.0)))

    def test(jac, point):
        if point is not None:
            return point.test_fold
        return fold_test(jac)

    u, m, jac, eigs = _refine_on_segment(point_a, point_b, params, free_param,
                                         config, ev, crit, test, eig_tol)
    return _make_point(u, m, (free_param,), jac)


def detect_hopf(point_a: BranchPoint, point_b: BranchPoint, params,
                free_param: str, config: ContinuationConfig, *, coarse,
                eig_tol: float = 1e-6) -> BranchPoint:
    """Refine a torus (Neimark-Sacker) crossing bracketed by two points.

    The refined point records theta, the argument of the critical pair.  A
    candidate whose pair has collapsed onto the real axis raises
    ResonanceAmbiguityError.
    """
    ev = _as_evaluator(coarse)
    fa, fb = point_a.test_hopf, point_b.test_hopf
    if not (math.isfinite(fa) and math.isfinite(fb)) or fa * fb > 0:
        raise NotABifurcationError(
            f"no sign change of the complex-pair modulus test: {fa} vs {fb}")

    def crit(eigs):
        rot = _critical_rotation(eigs)
        if rot is None:
            raise ResonanceAmbiguityError(
                "critical pair became real during refinement; rotation number "
                "undefined near a strong resonance")
        return abs(rot[0] - 1.0)

    def test(jac, point):
        if point is not None:
            return point.test_hopf
        return hopf_test(np.linalg.eigvals(jac))

    u, m, jac, eigs = _refine_on_segment(point_a, point_b, params, free_param,
                                         config, ev, crit, test, eig_tol)
    point = _make_point(u, m, (free_param,), jac)
    point.theta = _critical_rotation(eigs)[1]
    return point


def _fold_system_corrector(ev, pred, tan, m, names, template, tol, max_iter,
                           fd):
    """Newton on the fold system {h - z, (J - I) v, |v|^2 - 1, arclength}.

    Unknowns u = (z, v, p1, p2).  J v is a central directional difference (2
    map rows); the bordered Jacobian uses forward differences, all rows of
    one iteration batched into a single map_many call.
    """
    u = pred.copy()
    n_unknown = 2 * m + 2

    for it in range(max_iter):
        z, v = u[:m], u[m:2 * m]
        p = _set_params(template, names, u[2 * m:])
        eta = fd / max(float(np.linalg.norm(v)), 1e-12)

        items = [(z, p), (z + eta * v, p), (z - eta * v, p)]
        zcols, vcols, pcols = [], [], []
        for k in range(m):
            e = np.zeros(m)
            e[k] = fd
            zk = z + e
            zcols.append(len(items))
            items.extend([(zk, p), (zk + eta * v, p), (zk - eta * v, p)])
        for k in range(m):
            e = np.zeros(m)
            e[k] = fd
            vk = v + e
            ek = fd / max(float(np.linalg.norm(vk)), 1e-12)
            vcols.append(len(items))
            items.extend([(z + ek * vk, p), (z - ek * vk, p)])
        dps = []
        for j, name in enumerate(names):
            dp = fd * max(1.0, abs(u[2 * m + j]))
            dps.append(dp)
            pj = _set_params(template, names,
                             u[2 * m:] + dp * np.eye(2)[j])
            pcols.append(len(items))
            items.extend([(z, pj), (z + eta * v, pj), (z - eta * v, pj)])

        try:
            vals = ev.map_many(items)
        except (NumericalError, DomainError) as err:
            raise _CorrectorFailure(str(err)) from err

        hz = vals[0]
        jv = (vals[1] - vals[2]) / (2.0 * eta)
        f = np.concatenate([
            hz - z,
            jv - v,
            [float(v @ v) - 1.0],
            [float(tan @ (u - pred))],
        ])
        res = float(np.max(np.abs(f)))
        if res < tol:
            return u, None, it
        mat = np.zeros((n_unknown, n_unknown))
        for k in range(m):
            i0 = zcols[k]
            hz_k = vals[i0]
            jv_k = (vals[i0 + 1] - vals[i0 + 2]) / (2.0 * eta)
            mat[:m, k] = (hz_k - hz) / fd
            mat[k, k] -= 1.0
            mat[m:2 * m, k] = (jv_k - jv) / fd
        for k in range(m):
            i0 = vcols[k]
            vk = v + fd * np.eye(m)[k]
            ek = fd / max(float(np.linalg.norm(vk)), 1e-12)
            jv_k = (vals[i0] - vals[i0 + 1]) / (2.0 * ek)
            mat[m:2 * m, m + k] = (jv_k - jv) / fd
            mat[m + k, m + k] -= 1.0
        for j in range(2):
            i0 = pcols[j]
            hz_j = vals[i0]
            jv_j = (vals[i0 + 1] - vals[i0 + 2]) / (2.0 * eta)
            mat[:m, 2 * m + j] = (hz_j - hz) / dps[j]
            mat[m:2 * m, 2 * m + j] = (jv_j - jv) / dps[j]
        mat[2 * m, m:2 * m] = 2.0 * v
        mat[2 * m + 1, :] = tan
        try:
            delta = np.linalg.solve(mat, -f)
        except np.linalg.LinAlgError as err:
            raise _CorrectorFailure("singular fold system") from err
        if not np.all(np.isfinite(delta)) or np.max(np.abs(delta)) > 1e3:
            raise _CorrectorFailure("fold corrector step blew up")
        u = u + delta
    raise _CorrectorFailure(f"no convergence in {max_iter} iterations")


def continue_fold_curve(fold: BranchPoint, params, free_params: tuple[str, str],
                        config: ContinuationConfig, *, coarse,
                        param_range: dict | None = None,
                        desync_policy: DesyncPolicy | None = None) -> Branch:
    """Trace a fold curve in two parameters from a refined fold point.

    free_params is (slice parameter, curve parameter): the first must be the
    parameter the fold was detected in (fold.active_params carries its
    value), the second is taken from params and varied along the curve first.
    Each accepted point is decorated with the eigenvalues of the full coarse
    Jacobian, so fold membership (an eigenvalue near +1) is checkable
    downstream.
    """
    ev = _as_evaluator(coarse)
    _check_free_params(params, free_params)
    p1name, p2name = free_params
    if p1name not in fold.active_params:
        raise DomainError(
            f"fold point does not carry parameter {p1name!r}; it was detected "
            f"in {tuple(fold.active_params)}")
    z0 = fold.z.to_vector()
    m = z0.size

    p_at = _set_params(params, (p1name,), (fold.active_params[p1name],))
    jac0 = ev.jacobian(z0, p_at)
    eigs0 = np.linalg.eigvals(jac0)
    k0 = int(np.argmin(np.abs(eigs0 - 1.0)))
    _, vecs = np.linalg.eig(jac0)
    v0 = np.real(vecs[:, k0])
    v0 /= np.linalg.norm(v0)

    u0 = np.concatenate([z0, v0,
                         [fold.active_params[p1name], getattr(params, p2name)]])
    fd = ev.fd_step

    def corrector(pred, tan):
        return _fold_system_corrector(ev, pred, tan, m, free_params, params,
                                      config.corrector_tol,
                                      config.corrector_max_iter, fd)

    # polish the assembled start onto the extended system at fixed p2
    tan0 = np.zeros(2 * m + 2)
    tan0[2 * m + 1] = 1.0
    try:
        u0, _, _ = corrector(u0.copy(), tan0)
    except _CorrectorFailure as err:
        raise ContinuationError(f"could not polish the fold start: {err}") from err

    def point_at(u, payload):
        p = _set_params(params, free_params, u[2 * m:])
        jac = ev.jacobian(u[:m], p)
        pt = _make_point(np.concatenate([u[:m], u[2 * m:]]), m, free_params, jac)
        return pt

    points, term = _run_curve(u0, corrector, point_at, 2 * m + 2,
                              slice(2 * m, 2 * m + 2), free_params, params,
                              config, param_range, desync_policy, 2 * m + 1)
    return Branch(points=points, termination=term, free_params=free_params)


def _hopf_system_corrector(ev, pred, tan, m, names, template, tol, max_iter,
                           fd, phase_ref):
    """Newton on the torus-curve system.

    Unknowns u = (z, wr, wi, theta, p1, p2); equations: fixed point (m),
    real and imaginary parts of J w = e^{i theta} w (2m), |w|^2 = 1, the
    phase condition Im(conj(c) . w) = 0 against the reference eigenvector c,
    and arclength.  theta derivatives are analytic; everything else is
    forward-differenced in one batched call.
    """
    u = pred.copy()
    n_unknown = 3 * m + 3
    cr, ci = phase_ref

    def unpack(uu):
        return (uu[:m], uu[m:2 * m], uu[2 * m:3 * m], float(uu[3 * m]),
                uu[3 * m + 1:])

    for it in range(max_iter):
        z, wr, wi, theta, pvals = unpack(u)
        p = _set_params(template, names, pvals)
        er = fd / max(float(np.linalg.norm(wr)), 1e-12)
        ei = fd / max(float(np.linalg.norm(wi)), 1e-12)

        items = [(z, p), (z + er * wr, p), (z - er * wr, p),
                 (z + ei * wi, p), (z - ei * wi, p)]
        zcols, wrcols, wicols, pcols = [], [], [], []
        for k in range(m):
            e = np.zeros(m)
            e[k] = fd
            zk = z + e
            zcols.append(len(items))
            items.extend([(zk, p), (zk + er * wr, p), (zk - er * wr, p),
                          (zk + ei * wi, p), (zk - ei * wi, p)])
        for k in range(m):
            e = np.zeros(m)
            e[k] = fd
            wk = wr + e
            ek = fd / max(float(np.linalg.norm(wk)), 1e-12)
            wrcols.append(len(items))
            items.extend([(z + ek * wk, p), (z - ek * wk, p)])
        for k in range(m):
            e = np.zeros(m)
            e[k] = fd
            wk = wi + e
            ek = fd / max(float(np.linalg.norm(wk)), 1e-12)
            wicols.append(len(items))
            items.extend([(z + ek * wk, p), (z - ek * wk, p)])
        dps = []
        for j, name in enumerate(names):
            dp = fd * max(1.0, abs(pvals[j]))
            dps.append(dp)
            pj = _set_params(template, names, pvals + dp * np.eye(2)[j])
            pcols.append(len(items))
            items.extend([(z, pj), (z + er * wr, pj), (z - er * wr, pj),
                          (z + ei * wi, pj), (z - ei * wi, pj)])

        try:
            vals = ev.map_many(items)
        except (NumericalError, DomainError) as err:
            raise _CorrectorFailure(str(err)) from err

        def dirpair(i0, step):
            return (vals[i0] - vals[i0 + 1]) / (2.0 * step)

        hz = vals[0]
        jwr = dirpair(1, er)
        jwi = dirpair(3, ei)
        ct, st = math.cos(theta), math.sin(theta)
        f = np.concatenate([
            hz - z,
            jwr - (ct * wr - st * wi),
            jwi - (st * wr + ct * wi),
            [float(wr @ wr + wi @ wi) - 1.0],
            [float(cr @ wi - ci @ wr)],
            [float(tan @ (u - pred))],
        ])
        res = float(np.max(np.abs(f)))
        if res < tol:
            return u, None, it
        mat = np.zeros((n_unknown, n_unknown))
        r1, r2, r3 = slice(0, m), slice(m, 2 * m), slice(2 * m, 3 * m)
        for k in range(m):
            i0 = zcols[k]
            mat[r1, k] = (vals[i0] - hz) / fd
            mat[k, k] -= 1.0
            mat[r2, k] = (dirpair(i0 + 1, er) - jwr) / fd
            mat[r3, k] = (dirpair(i0 + 3, ei) - jwi) / fd
        for k in range(m):
            wk = wr + fd * np.eye(m)[k]
            ek = fd / max(float(np.linalg.norm(wk)), 1e-12)
            mat[r2, m + k] = (dirpair(wrcols[k], ek) - jwr) / fd
            mat[m + k, m + k] -= ct
            mat[2 * m + k, m + k] = -st
        for k in range(m):
            wk = wi + fd * np.eye(m)[k]
            ek = fd / max(float(np.linalg.norm(wk)), 1e-12)
            mat[r3, 2 * m + k] = (dirpair(wicols[k], ek) - jwi) / fd
            mat[m + k, 2 * m + k] = st
            mat[2 * m + k, 2 * m + k] -= ct
        mat[r2, 3 * m] = st * wr + ct * wi
        mat[r3, 3 * m] = -ct * wr + st * wi
        for j in range(2):
            i0 = pcols[j]
            mat[r1, 3 * m + 1 + j] = (vals[i0] - hz) / dps[j]
            mat[r2, 3 * m + 1 + j] = (dirpair(i0 + 1, er) - jwr) / dps[j]
            mat[r3, 3 * m + 1 + j] = (dirpair(i0 + 3, ei) - jwi) / dps[j]
        mat[3 * m, m:2 * m] = 2.0 * wr
        mat[3 * m, 2 * m:3 * m] = 2.0 * wi
        mat[3 * m + 1, m:2 * m] = -ci
        mat[3 * m + 1, 2 * m:3 * m] = cr
        mat[3 * m + 2, :] = tan
        try:
            delta = np.linalg.solve(mat, -f)
        except np.linalg.LinAlgError as err:
            raise _CorrectorFailure("singular torus-curve system") from err
        if not np.all(np.isfinite(delta)) or np.max(np.abs(delta)) > 1e3:
            raise _CorrectorFailure("torus corrector step blew up")
        u = u + delta
    raise _CorrectorFailure(f"no convergence in {max_iter} iterations")


def continue_hopf_curve(hopf: BranchPoint, params,
                        free_params: tuple[str, str],
                        config: ContinuationConfig, *, coarse,
                        param_range: dict | None = None,
                        desync_policy: DesyncPolicy | None = None) -> Branch:
    """Trace a torus-bifurcation curve in two parameters.

    hopf must carry theta (produced by detect_hopf).  Points record theta,
    and the returned branch carries a theta-monotonicity flag; theta in the
    open interval (0, pi) is enforced at every accepted point, since the
    endpoints are strong resonances where the defining system degenerates.
    """
    ev = _as_evaluator(coarse)
    _check_free_params(params, free_params)
    if hopf.theta is None:
        raise DomainError("starting point carries no rotation number theta; "
                          "refine it with detect_hopf first")
    p1name, p2name = free_params
    if p1name not in hopf.active_params:
        raise DomainError(
            f"torus point does not carry parameter {p1name!r}; it was detected "
            f"in {tuple(hopf.active_params)}")
    z0 = hopf.z.to_vector()
    m = z0.size

    p_at = _set_params(params, (p1name,), (hopf.active_params[p1name],))
    jac0 = ev.jacobian(z0, p_at)
    eigs, vecs = np.linalg.eig(jac0)
    cand = np.nonzero(eigs.imag > _IMAG_TOL)[0]
    if cand.size == 0:
        raise ResonanceAmbiguityError(
            "no complex eigenvalue pair at the starting point")
    k0 = cand[np.argmin(np.abs(np.abs(eigs[cand]) - 1.0))]
    w = vecs[:, k0]
    w = w / np.linalg.norm(w)
    theta0 = float(np.angle(eigs[k0]))

    u0 = np.concatenate([z0, w.real, w.imag, [theta0],
                         [hopf.active_params[p1name], getattr(params, p2name)]])
    fd = ev.fd_step
    phase_ref = (w.real.copy(), w.imag.copy())

    def corrector(pred, tan):
        return _hopf_system_corrector(ev, pred, tan, m, free_params, params,
                                      config.corrector_tol,
                                      config.corrector_max_iter, fd, phase_ref)

    tan0 = np.zeros(3 * m + 3)
    tan0[3 * m + 2] = 1.0
    try:
        u0, _, _ = corrector(u0.copy(), tan0)
    except _CorrectorFailure as err:
        raise ContinuationError(f"could not polish the torus start: {err}") from err

    def point_at(u, payload):
        theta = float(u[3 * m])
        p = _set_params(params, free_params, u[3 * m + 1:])
        jac = ev.jacobian(u[:m], p)
        pt = _make_point(np.concatenate([u[:m], u[3 * m + 1:]]), m,
                         free_params, jac)
        pt.theta = theta
        phase_ref[0][:] = u[m:2 * m]
        phase_ref[1][:] = u[2 * m:3 * m]
        return pt

    def corrector_checked(pred, tan):
        u, payload, iters = corrector(pred, tan)
        theta = float(u[3 * m])
        if not 0.0 < theta < math.pi:
            raise _CorrectorFailure(f"theta = {theta:.4f} left (0, pi)")
        return u, payload, iters

    points, term = _run_curve(u0, corrector_checked, point_at, 3 * m + 3,
                              slice(3 * m + 1, 3 * m + 3), free_params, params,
                              config, param_range, desync_policy, 3 * m + 2)
    # a stall at the edge of the theta window is the curve reaching a strong
    # resonance (pair collapsing onto +1 or -1), a geometric endpoint rather
    # than a numerical failure
    if term.reason != "physics-breakdown" and "left (0, pi)" in term.detail:
        term = TerminationRecord(reason="resonance-endpoint",
                                 detail=term.detail,
                                 desync_fraction=term.desync_fraction)
    thetas = [pt.theta for pt in points]
    diffs = np.diff(thetas)
    monotone = bool(np.all(diffs >= -1e-10) or np.all(diffs <= 1e-10))
    return Branch(points=points, termination=term, free_params=free_params,
                  theta_monotone=monotone)
