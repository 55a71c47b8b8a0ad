"""Fine-scale diagnostics: synchrony classification, slow-modulation periods
near a locking boundary, and snapshot correlation with the heterogeneity.

Synchrony is judged by winding: each oscillator's upward crossings of its own
mean are counted over an exact whole number of forcing periods, so a 1:1
entrained oscillator scores exactly observe_periods regardless of its phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .chaos import ChaosCoeffs, design_matrix, fit_residual, lift, restrict
from .errors import DomainError
from .network import (DEFAULT_DT, DEFAULT_GUARD, Heterogeneity, ModelParams,
                      NetworkState, _record_arrays, integrate)


@dataclass(eq=False)
class SyncReport:
    """Winding-based synchrony classification over an observation window."""

    rotation_counts: np.ndarray
    modal_count: int
    modal_tie: bool
    cluster_indices: np.ndarray
    desync_indices: np.ndarray
    quiescent_indices: np.ndarray
    desync_fraction: float
    cluster_locked_to_forcing: bool
    observe_periods: int

    @property
    def n_cluster(self) -> int:
        return self.cluster_indices.size


def _count_upward_crossings(sig: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Upward mean-crossings per oscillator; sig is (samples, n_osc).

    Oscillators whose peak-to-peak excursion is below floor are quiescent by
    definition; without the floor, round-off ripple on a settled state would
    register as winding.
    """
    centered = sig - sig.mean(axis=0)
    up = (centered[:-1] < 0) & (centered[1:] >= 0)
    counts = up.sum(axis=0).astype(np.int64)
    counts[np.ptp(sig, axis=0) < floor] = 0
    return counts


def classify_synchrony(params: ModelParams, het: Heterogeneity,
                       observe_periods: int = 100, settle_periods: int = 50,
                       dt: float = DEFAULT_DT, state0: NetworkState | None = None,
                       samples_per_period: int = 64,
                       guard: float = DEFAULT_GUARD) -> SyncReport:
    """Classify oscillators by their winding over an exact window.

    After settling, each oscillator's oscillation count over exactly
    observe_periods forcing periods is tallied.  The largest group sharing a
    count is the cluster (ties resolved to the smaller count and flagged);
    zero-count oscillators are quiescent, everything else is desynchronized.
    The cluster is locked to the forcing when its shared count equals
    observe_periods (1:1 entrainment).
    """
    if observe_periods < 1:
        raise DomainError(f"observe_periods must be >= 1, got {observe_periods}")
    if settle_periods < 0:
        raise DomainError(f"settle_periods must be >= 0, got {settle_periods}")
    period = params.forcing_period
    if state0 is None:
        state0 = NetworkState(np.full(params.n_osc, 0.5), np.zeros(params.n_osc))
    settled = integrate(state0, params, het, settle_periods * period, dt=dt,
                        guard=guard)
    x = settled.x[None, :].copy()
    y = settled.y[None, :].copy()
    pre = np.ascontiguousarray((params.phi + params.beta * het.mu)[None, :])
    stride = max(1, int(round(period / dt / samples_per_period)))
    _, xs, _ = _record_arrays(x, y, pre, settled.t, observe_periods * period, dt,
                              params.epsilon, params.amplitude, params.omega,
                              stride=stride, guard=guard)
    counts = _count_upward_crossings(xs[:, 0, :])

    nonzero = counts[counts > 0]
    if nonzero.size == 0:
        modal, tie = 0, False
        cluster = np.array([], dtype=np.int64)
    else:
        values, freq = np.unique(nonzero, return_counts=True)
        top = freq.max()
        candidates = values[freq == top]
        modal = int(candidates.min())
        tie = candidates.size > 1
        cluster = np.nonzero(counts == modal)[0]
    quiescent = np.nonzero(counts == 0)[0]
    all_idx = np.arange(counts.size)
    desync = np.setdiff1d(all_idx, np.concatenate([cluster, quiescent]))
    return SyncReport(
        rotation_counts=counts,
        modal_count=modal,
        modal_tie=tie,
        cluster_indices=cluster,
        desync_indices=desync,
        quiescent_indices=quiescent,
        desync_fraction=desync.size / counts.size,
        cluster_locked_to_forcing=(modal == observe_periods),
        observe_periods=observe_periods,
    )


@dataclass(frozen=True)
class WalkthroughEstimate:
    """Slow-modulation period of the strobed leading coefficient at one omega.

    period is None when fewer than two phase slips occurred within the
    observation budget; resolved means at least min_slips slips were seen, so
    a longer budget would not change the estimate.  distance is the detuning
    |omega - omega*| from the fold the walkthrough happens around.
    """

    omega: float
    distance: float
    period: float | None
    n_slips: int
    resolved: bool


def _strobed_leading_coeff(params: ModelParams, het: Heterogeneity, q: int,
                           n_periods: int, settle_periods: int, dt: float,
                           state0: NetworkState | None,
                           guard: float) -> np.ndarray:
    period = params.forcing_period
    if state0 is None:
        state0 = NetworkState(np.full(params.n_osc, 0.5), np.zeros(params.n_osc))
    state = integrate(state0, params, het, settle_periods * period, dt=dt,
                      guard=guard)
    pinv = np.linalg.pinv(design_matrix(het, q))
    x = state.x[None, :].copy()
    y = state.y[None, :].copy()
    pre = np.ascontiguousarray((params.phi + params.beta * het.mu)[None, :])
    nsteps = int(math.floor(period / dt))
    rem = period - nsteps * dt
    if rem < dt * 1e-9:
        rem = 0.0
    from . import _kernels
    a0 = np.empty(n_periods)
    for k in range(n_periods):
        status = _kernels.rk4_batch(x, y, pre, k * period, dt, nsteps, rem,
                                    params.epsilon, params.amplitude,
                                    params.omega, guard)
        if status.any():
            raise DomainError("trajectory left the trust region during the "
                              "walkthrough observation window")
        a0[k] = pinv[0] @ x[0]
    return a0


def slip_period_from_series(a0: np.ndarray, strobe_period: float,
                            band_mads: float = 3.0,
                            min_slips: int = 5) -> tuple[float | None, int, bool]:
    """Slip statistics of a strobed scalar series.

    A slip event starts when the series leaves the band median +- band_mads *
    MAD (with a small absolute floor so a fully converged series does not
    trigger on round-off).  One phase slip can poke out of the band on both
    sides of the dwell value, so band exits separated by much less than the
    typical recurrence (half the 90th-percentile gap) are merged into one
    event.  Returns (median inter-slip period, slip count, resolved flag).
    """
    med = float(np.median(a0))
    mad = float(np.median(np.abs(a0 - med)))
    band = band_mads * mad + 1e-6 * (1.0 + abs(med))
    outside = np.abs(a0 - med) > band
    starts = np.nonzero(outside[1:] & ~outside[:-1])[0] + 1
    if outside[0]:
        starts = np.concatenate([[0], starts])
    if starts.size >= 3:
        gaps = np.diff(starts)
        refractory = 0.5 * np.percentile(gaps, 90)
        keep = np.concatenate([[True], gaps >= refractory])
        starts = starts[keep]
    n_slips = int(starts.size)
    if n_slips < 2:
        return None, n_slips, False
    diffs = np.diff(starts) * strobe_period
    return float(np.median(diffs)), n_slips, n_slips >= min_slips


def walkthrough_period(params: ModelParams, het: Heterogeneity,
                       omega_star: float, omega_values, *,
                       q: int | None = None,
                       settle_periods: int = 50, max_periods: int = 4000,
                       dt: float = DEFAULT_DT, band_mads: float = 3.0,
                       min_slips: int = 5, state0: NetworkState | None = None,
                       guard: float = DEFAULT_GUARD) -> list[WalkthroughEstimate]:
    """Slow-modulation period just outside a locking boundary, per omega.

    For each forcing frequency the strobed leading coefficient a_0 is
    recorded for up to max_periods periods; phase slips are excursions beyond
    a robust band around its quasi-fixed value.  Near the fold at omega_star
    the period scales like |omega - omega_star|^(-1/2).
    """
    if q is None:
        q = min(1, params.n_osc - 1)
    out = []
    for omega in omega_values:
        p = replace(params, omega=omega)
        a0 = _strobed_leading_coeff(p, het, q, max_periods, settle_periods, dt,
                                    state0, guard)
        period, n_slips, resolved = slip_period_from_series(
            a0, p.forcing_period, band_mads=band_mads, min_slips=min_slips)
        out.append(WalkthroughEstimate(omega=float(omega),
                                       distance=abs(float(omega) - omega_star),
                                       period=period, n_slips=n_slips,
                                       resolved=resolved))
    return out


@dataclass(eq=False)
class SnapshotRecord:
    """State snapshot with its restriction and normalized fit residuals."""

    t: float
    coeffs: ChaosCoeffs
    residual_x: float
    residual_y: float
    state: NetworkState


def correlation_snapshot(params: ModelParams, het: Heterogeneity, times,
                         *, q: int = 1, dt: float = DEFAULT_DT,
                         init_seed: int = 0, init_scale: float = 1.0,
                         guard: float = DEFAULT_GUARD) -> list[SnapshotRecord]:
    """Track how random initial data slaves onto the heterogeneity.

    Starts from i.i.d. normal (x, y) of scale init_scale (independent of the
    mu draws), integrates to each requested time, and reports the normalized
    residual of the order-q Hermite fit at every snapshot: about 1 initially,
    small once the state has collapsed onto a smooth function of mu.
    """
    times = sorted(float(t) for t in times)
    if times and times[0] < 0:
        raise DomainError("snapshot times must be >= 0")
    # tagged stream: init_seed == the mu seed must not make x0 equal mu,
    # which would start exactly on the fit and hide the collapse
    rng = np.random.default_rng([init_seed, 1])
    state = NetworkState(init_scale * rng.standard_normal(params.n_osc),
                         init_scale * rng.standard_normal(params.n_osc), 0.0)
    records = []
    t_now = 0.0
    for t in times:
        state = integrate(state, params, het, t - t_now, dt=dt, guard=guard)
        t_now = t
        coeffs = restrict(state, het, q)
        rx, ry = fit_residual(state, het, q)
        records.append(SnapshotRecord(t=t, coeffs=coeffs, residual_x=rx,
                                      residual_y=ry, state=state.copy()))
    return records
