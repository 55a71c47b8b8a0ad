"""Coarse projective integration.

Alternates short bursts of fine integration (restricted to coarse
coefficients after every inner step) with polynomial extrapolation of the
coefficients across a projection horizon.  Each burst starts from a fresh
lifting of the current coarse state; by default every lift uses a brand-new
heterogeneity realization, which is legitimate exactly because the coarse
coefficients, not the fine state, carry the dynamics.

With n_project == 0 there is nothing to extrapolate and no reason to
re-lift: the run degenerates to one continuous fine integration restricted
at every step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .chaos import ChaosCoeffs, design_matrix, lift
from .errors import DivergenceError, DomainError, ProjectionOvershootError
from .network import (DEFAULT_DT, DEFAULT_GUARD, Heterogeneity, ModelParams,
                      _integrate_arrays, _record_arrays)

_CHUNK_STEPS = 2000  # bounds burst-recording memory at ~16 MB for n_osc = 500


@dataclass(frozen=True)
class ProjectionSchedule:
    """Inner-step and projection bookkeeping.

    Each cycle advances time by (n_inner + n_project) * dt: n_inner fine
    steps are integrated, then a degree fit_order polynomial through the
    restricted coefficients is evaluated n_project steps ahead.  fit_order ==
    n_inner interpolates exactly (Newton divided differences); a lower order
    fits by least squares.
    """

    dt: float = DEFAULT_DT
    n_inner: int = 3
    n_project: int = 3
    fit_order: int = 3

    def __post_init__(self):
        if self.dt <= 0:
            raise DomainError(f"dt must be > 0, got {self.dt}")
        if self.n_inner < 1:
            raise DomainError(f"n_inner must be >= 1, got {self.n_inner}")
        if self.n_project < 0:
            raise DomainError(f"n_project must be >= 0, got {self.n_project}")
        if not 1 <= self.fit_order <= self.n_inner:
            raise DomainError(
                f"fit_order must be in [1, n_inner = {self.n_inner}], got {self.fit_order}"
            )


class RealizationSource:
    """Supplies the heterogeneity realization used at each lifting step.

    Fresh mode draws a new realization per lift from a seeded stream; fixed
    mode hands back the same realization every time.  Both are reproducible
    from their seed.
    """

    def __init__(self, n_osc: int, seed: int = 0, fresh: bool = True,
                 het: Heterogeneity | None = None):
        if het is not None:
            if fresh:
                raise DomainError("an explicit realization implies fixed mode")
            if het.n_osc != n_osc:
                raise DomainError(
                    f"realization has {het.n_osc} oscillators, expected {n_osc}")
        self.n_osc = n_osc
        self.seed = seed
        self.fresh = fresh
        self._rng = np.random.default_rng(seed)
        self._fixed = het if het is not None else (
            None if fresh else Heterogeneity.draw(n_osc, seed))

    @classmethod
    def fresh_draws(cls, n_osc: int, seed: int = 0) -> "RealizationSource":
        return cls(n_osc, seed=seed, fresh=True)

    @classmethod
    def fixed(cls, n_osc: int, seed: int = 0) -> "RealizationSource":
        return cls(n_osc, seed=seed, fresh=False)

    @classmethod
    def fixed_realization(cls, het: Heterogeneity) -> "RealizationSource":
        return cls(het.n_osc, seed=het.seed or 0, fresh=False, het=het)

    def next(self) -> Heterogeneity:
        if not self.fresh:
            return self._fixed
        return Heterogeneity(self._rng.standard_normal(self.n_osc))


@dataclass(eq=False)
class ProjectiveSeries:
    """Coarse coefficients along a projective run.

    projected marks samples produced by extrapolation rather than by
    restricting an integrated state.  coeffs rows are (a_0..a_q, b_0..b_q).
    """

    times: np.ndarray
    coeffs: np.ndarray
    projected: np.ndarray
    q: int

    def a(self, j: int) -> np.ndarray:
        return self.coeffs[:, j]

    def b(self, j: int) -> np.ndarray:
        return self.coeffs[:, self.q + 1 + j]


def _newton_extrapolate(values: np.ndarray, tau: float) -> np.ndarray:
    """Interpolating polynomial through values at nodes 0..k, evaluated at tau."""
    k1 = values.shape[0]
    c = values.astype(np.float64).copy()
    for j in range(1, k1):
        c[j:] = (c[j:] - c[j - 1:-1]) / j
    res = c[k1 - 1].copy()
    for j in range(k1 - 2, -1, -1):
        res = c[j] + (tau - j) * res
    return res


def _ls_extrapolate(values: np.ndarray, fit_order: int, tau: float) -> np.ndarray:
    nodes = np.arange(values.shape[0], dtype=np.float64)
    coef = np.polynomial.polynomial.polyfit(nodes, values, fit_order)
    return np.polynomial.polynomial.polyval(tau, coef)


def _restricted_run(z: ChaosCoeffs, params: ModelParams, het: Heterogeneity,
                    t0: float, duration: float, dt: float, guard: float,
                    pinv: np.ndarray | None = None):
    """Integrate lift(z) for duration, restricting after every step.

    Returns (times, coeff_rows) excluding the initial sample.  Chunked so the
    recorded fine snapshots never exceed a fixed memory budget.  pinv, when
    given, must be the pseudoinverse of design_matrix(het, z.q); callers that
    reuse one realization across bursts pass it to skip the refactorization.
    """
    if pinv is None:
        v = design_matrix(het, z.q)
        pinv = np.linalg.pinv(v)
    state = lift(z, het, t=t0)
    x = state.x[None, :].copy()
    y = state.y[None, :].copy()
    pre = np.ascontiguousarray((params.phi + params.beta * het.mu)[None, :])
    times_out, coeff_out = [], []
    remaining = duration
    t = t0
    while remaining > dt * 1e-9:
        chunk = min(remaining, _CHUNK_STEPS * dt)
        times, xs, ys = _record_arrays(x, y, pre, t, chunk, dt,
                                       params.epsilon, params.amplitude,
                                       params.omega, stride=1, guard=guard)
        acoef = np.einsum("sn,qn->sq", xs[1:, 0, :], pinv)
        bcoef = np.einsum("sn,qn->sq", ys[1:, 0, :], pinv)
        times_out.append(times[1:])
        coeff_out.append(np.hstack([acoef, bcoef]))
        t = times[-1]
        remaining = t0 + duration - t
    return np.concatenate(times_out), np.vstack(coeff_out)


def projective_integrate(initial: ChaosCoeffs, params: ModelParams,
                         schedule: ProjectionSchedule, source: RealizationSource,
                         duration: float,
                         guard: float = DEFAULT_GUARD) -> ProjectiveSeries:
    """Run coarse projective integration for the given duration.

    The series records the restricted coefficients after every inner step and
    every extrapolated state.  Divergence inside a burst raises
    DivergenceError tagged with the cycle index; a non-finite extrapolation
    raises ProjectionOvershootError.  The run finishes with plain inner steps
    (no jump) whenever less than a full cycle of time remains, so the final
    sample lands exactly on duration.
    """
    if duration < 0:
        raise DomainError(f"duration must be >= 0, got {duration}")
    if source.n_osc < initial.q + 1:
        raise DomainError("realization size too small for the expansion order")
    dt = schedule.dt
    dim = 2 * (initial.q + 1)
    times = [0.0]
    rows = [initial.to_vector()]
    projected = [False]
    z = initial
    t = 0.0
    cycle = 0
    span = (schedule.n_inner + schedule.n_project) * dt
    exact = schedule.fit_order == schedule.n_inner

    if schedule.n_project == 0:
        # nothing to project: one continuous fine run, restricted every step
        if duration > 0:
            ts, cs = _restricted_run(z, params, source.next(), 0.0, duration,
                                     dt, guard)
            times.extend(ts)
            rows.extend(cs)
            projected.extend([False] * len(ts))
        return ProjectiveSeries(np.asarray(times), np.vstack(rows),
                                np.asarray(projected, dtype=bool), initial.q)

    # a non-fresh source hands back one realization forever, so the
    # restriction operator can be factored once up front
    pinv = None
    if not source.fresh:
        pinv = np.linalg.pinv(design_matrix(source.next(), initial.q))

    while t + span <= duration * (1 + 1e-12):
        het = source.next()
        try:
            ts, cs = _restricted_run(z, params, het, t, schedule.n_inner * dt,
                                     dt, guard, pinv=pinv)
        except DivergenceError as err:
            raise DivergenceError(err.time, cycle=cycle) from err
        times.extend(ts)
        rows.extend(cs)
        projected.extend([False] * len(ts))
        nodes = np.vstack([z.to_vector()[None, :], cs])
        tau = float(schedule.n_inner + schedule.n_project)
        with np.errstate(over="ignore", invalid="ignore"):
            if exact:
                znew = _newton_extrapolate(nodes, tau)
            else:
                znew = _ls_extrapolate(nodes, schedule.fit_order, tau)
        if not np.all(np.isfinite(znew)):
            raise ProjectionOvershootError(cycle)
        t = t + span
        z = ChaosCoeffs.from_vector(znew)
        times.append(t)
        rows.append(znew)
        projected.append(True)
        cycle += 1

    if duration - t > dt * 1e-9:
        het = source.next()
        try:
            ts, cs = _restricted_run(z, params, het, t, duration - t, dt,
                                     guard, pinv=pinv)
        except DivergenceError as err:
            raise DivergenceError(err.time, cycle=cycle) from err
        times.extend(ts)
        rows.extend(cs)
        projected.extend([False] * len(ts))

    series = ProjectiveSeries(np.asarray(times), np.vstack(rows),
                              np.asarray(projected, dtype=bool), initial.q)
    assert series.coeffs.shape[1] == dim
    return series


@dataclass(frozen=True)
class SpeedupResult:
    """Wall-clock comparison between direct fine integration and projective
    integration of the same horizon.

    direct_seconds covers one lift plus the full fine integration (no
    recording); projective_seconds covers everything projective_integrate
    does, including lifts, restrictions and fits.
    """

    direct_seconds: float
    projective_seconds: float

    @property
    def speedup(self) -> float:
        return self.direct_seconds / self.projective_seconds


def measure_speedup(initial: ChaosCoeffs, params: ModelParams,
                    schedule: ProjectionSchedule, duration: float,
                    seed: int = 0, fresh: bool = True) -> SpeedupResult:
    """Time matched direct and projective runs over the same duration."""
    src = RealizationSource(params.n_osc, seed=seed, fresh=fresh)

    het = RealizationSource(params.n_osc, seed=seed, fresh=fresh).next()
    tic = time.perf_counter()
    state = lift(initial, het, t=0.0)
    x = state.x[None, :].copy()
    y = state.y[None, :].copy()
    pre = np.ascontiguousarray((params.phi + params.beta * het.mu)[None, :])
    _integrate_arrays(x, y, pre, 0.0, duration, schedule.dt,
                      params.epsilon, params.amplitude, params.omega)
    direct_s = time.perf_counter() - tic

    tic = time.perf_counter()
    projective_integrate(initial, params, schedule, src, duration)
    projective_s = time.perf_counter() - tic
    return SpeedupResult(direct_seconds=direct_s, projective_seconds=projective_s)
