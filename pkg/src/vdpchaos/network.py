"""Forced heterogeneous network of modified van der Pol oscillators.

The fine-scale model is

    dx_i/dt = y_i - x_i (x_i^2 / 3 - (phi + beta * mu_i)) + x_i^2 / 2
              - eps (x_i - <x>)
    dy_i/dt = -x_i + A sin(omega t)

with <x> the instantaneous network mean and mu_i i.i.d. standard normal
draws that never change during a run.  Integration is fixed-step classical
RK4; runs whose duration is not a step multiple finish with one shortened
step so that strobing at the forcing period is phase-exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DivergenceError, DomainError

DEFAULT_DT = 0.005
DEFAULT_GUARD = 1e6


@dataclass(frozen=True)
class ModelParams:
    """Scalar parameters of the model and its forcing.

    phi is the common excitability offset, beta the heterogeneity strength,
    epsilon the mean-field coupling gain, amplitude and omega the sinusoidal
    forcing.  omega may be zero or negative while unused, but any operation
    that needs the forcing period insists on omega > 0.
    """

    phi: float = 1.0
    beta: float = 0.0
    epsilon: float = 1.0
    amplitude: float = 0.5
    omega: float = 0.85
    n_osc: int = 500

    def __post_init__(self):
        if self.n_osc < 1:
            raise DomainError(f"n_osc must be >= 1, got {self.n_osc}")
        if self.epsilon < 0:
            raise DomainError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.amplitude < 0:
            raise DomainError(f"amplitude must be >= 0, got {self.amplitude}")
        for name in ("phi", "beta", "epsilon", "amplitude", "omega"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")

    @property
    def forcing_period(self) -> float:
        if self.omega <= 0:
            raise DomainError(
                f"forcing period undefined for omega = {self.omega}; omega must be > 0"
            )
        return 2.0 * math.pi / self.omega


@dataclass(frozen=True, eq=False)
class Heterogeneity:
    """A frozen realization of the per-oscillator excitability draws mu_i."""

    mu: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        mu = np.ascontiguousarray(self.mu, dtype=np.float64)
        if mu.ndim != 1 or mu.size == 0:
            raise DomainError("mu must be a non-empty 1-d array")
        if not np.all(np.isfinite(mu)):
            raise DomainError("mu must be finite")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @classmethod
    def draw(cls, n_osc: int, seed: int) -> "Heterogeneity":
        """Draw n_osc standard-normal values reproducibly from seed."""
        if n_osc < 1:
            raise DomainError(f"n_osc must be >= 1, got {n_osc}")
        mu = np.random.default_rng(seed).standard_normal(n_osc)
        return cls(mu=mu, seed=seed)

    @property
    def n_osc(self) -> int:
        return self.mu.shape[0]


@dataclass(eq=False)
class NetworkState:
    """Full fine-scale state: per-oscillator (x, y) plus the current time."""

    x: np.ndarray
    y: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.float64)
        if self.x.shape != self.y.shape or self.x.ndim != 1 or self.x.size == 0:
            raise DomainError("x and y must be 1-d arrays of equal nonzero length")

    @property
    def n_osc(self) -> int:
        return self.x.shape[0]

    def copy(self) -> "NetworkState":
        return NetworkState(self.x.copy(), self.y.copy(), self.t)


def _check_compatible(state: NetworkState, params: ModelParams, het: Heterogeneity):
    if state.n_osc != params.n_osc or het.n_osc != params.n_osc:
        raise DomainError(
            f"size mismatch: state has {state.n_osc}, heterogeneity has "
            f"{het.n_osc}, params expect {params.n_osc}"
        )


def rhs(state: NetworkState, params: ModelParams, het: Heterogeneity):
    """Time derivative (dx, dy) of the full system at the state's own time."""
    _check_compatible(state, params, het)
    x, y = state.x, state.y
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and math.isfinite(state.t)):
        raise DomainError("rhs requires a finite state")
    pre = params.phi + params.beta * het.mu
    xbar = x.mean()
    dx = y - x * (x * x / 3.0 - pre) + 0.5 * x * x - params.epsilon * (x - xbar)
    dy = -x + params.amplitude * math.sin(params.omega * state.t)
    return dx, dy


def _split_steps(duration: float, dt: float) -> tuple[int, float]:
    """Whole steps plus remainder covering duration exactly.

    A remainder below dt * 1e-9 is rounding noise from period arithmetic and
    is absorbed instead of being stepped.
    """
    nsteps = int(math.floor(duration / dt))
    rem = duration - nsteps * dt
    if rem < dt * 1e-9:
        rem = 0.0
    return nsteps, rem


def _integrate_arrays(x, y, pre, t0, duration, dt, eps, amp, omega,
                      guard=DEFAULT_GUARD, seed_labels=None):
    """Advance (B, N) arrays in place; raise DivergenceError on blow-up.

    seed_labels, when given, maps batch row to the realization seed named in
    the error.
    """
    nsteps, rem = _split_steps(duration, dt)
    status = _kernels.rk4_batch(x, y, pre, t0, dt, nsteps, rem, eps, amp, omega, guard)
    bad = np.nonzero(status)[0]
    if bad.size:
        b = int(bad[0])
        k = int(status[b])
        t_fail = t0 + (k * dt if k <= nsteps else nsteps * dt + rem)
        seed = None if seed_labels is None else seed_labels[b]
        raise DivergenceError(t_fail, seed=seed)


def _record_arrays(x, y, pre, t0, duration, dt, eps, amp, omega, stride,
                   guard=DEFAULT_GUARD):
    """Advance (B, N) arrays, snapshotting every stride-th step.

    Returns (times, xs, ys) with xs, ys shaped (S, B, N).  The initial state
    and the exact final state (including a shortened last step) are always
    sampled, so the window endpoints are exact.
    """
    nsteps, rem = _split_steps(duration, dt)
    ntot = nsteps + (1 if rem > 0.0 else 0)
    steps = list(range(0, nsteps + 1, stride))
    if steps[-1] != ntot:
        steps.append(ntot)
    record_steps = np.asarray(steps, dtype=np.int64)
    times = t0 + np.where(record_steps <= nsteps, record_steps * dt, nsteps * dt + rem)
    nb, n = x.shape
    out_x = np.empty((record_steps.size, nb, n))
    out_y = np.empty((record_steps.size, nb, n))
    status = _kernels.rk4_record(x, y, pre, t0, dt, nsteps, rem, eps, amp, omega,
                                 guard, record_steps, out_x, out_y)
    bad = np.nonzero(status)[0]
    if bad.size:
        b = int(bad[0])
        k = int(status[b])
        t_fail = t0 + (k * dt if k <= nsteps else nsteps * dt + rem)
        raise DivergenceError(t_fail)
    return times, out_x, out_y


def integrate(state: NetworkState, params: ModelParams, het: Heterogeneity,
              duration: float, dt: float = DEFAULT_DT,
              guard: float = DEFAULT_GUARD) -> NetworkState:
    """Integrate the full system forward by duration; returns a new state.

    Raises DivergenceError (with the blow-up time) if any component leaves
    |.| < guard, and DomainError for invalid inputs.
    """
    _check_compatible(state, params, het)
    if dt <= 0:
        raise DomainError(f"dt must be > 0, got {dt}")
    if duration < 0:
        raise DomainError(f"duration must be >= 0, got {duration}")
    if not (np.all(np.isfinite(state.x)) and np.all(np.isfinite(state.y))):
        raise DomainError("integrate requires a finite initial state")
    x = state.x[None, :].copy()
    y = state.y[None, :].copy()
    pre = np.ascontiguousarray((params.phi + params.beta * het.mu)[None, :])
    _integrate_arrays(x, y, pre, state.t, duration, dt,
                      params.epsilon, params.amplitude, params.omega, guard)
    return NetworkState(x[0], y[0], state.t + duration)


def record_series(state: NetworkState, params: ModelParams, het: Heterogeneity,
                  duration: float, stride: int = 1, dt: float = DEFAULT_DT,
                  guard: float = DEFAULT_GUARD):
    """Integrate for duration, sampling every stride-th step.

    Returns (times, xs, ys) with xs, ys shaped (samples, n_osc); the initial
    and exact final states are always included.
    """
    _check_compatible(state, params, het)
    if dt <= 0:
        raise DomainError(f"dt must be > 0, got {dt}")
    if duration < 0:
        raise DomainError(f"duration must be >= 0, got {duration}")
    if stride < 1:
        raise DomainError(f"stride must be >= 1, got {stride}")
    x = state.x[None, :].copy()
    y = state.y[None, :].copy()
    pre = np.ascontiguousarray((params.phi + params.beta * het.mu)[None, :])
    times, xs, ys = _record_arrays(x, y, pre, state.t, duration, dt,
                                   params.epsilon, params.amplitude,
                                   params.omega, stride, guard=guard)
    return times, xs[:, 0, :], ys[:, 0, :]


def strobe_full(state: NetworkState, params: ModelParams, het: Heterogeneity,
                n_periods: int = 1, dt: float = DEFAULT_DT,
                guard: float = DEFAULT_GUARD) -> NetworkState:
    """Advance by n_periods forcing periods, landing exactly on the strobe."""
    if n_periods < 0:
        raise DomainError(f"n_periods must be >= 0, got {n_periods}")
    out = state
    for _ in range(n_periods):
        out = integrate(out, params, het, params.forcing_period, dt=dt, guard=guard)
    return out


def measure_angular_frequency(params: ModelParams, het: Heterogeneity,
                              settle_time: float = 200.0,
                              measure_time: float = 400.0,
                              dt: float = DEFAULT_DT,
                              state0: NetworkState | None = None,
                              quiescent_tol: float = 1e-6) -> float | None:
    """Self-sustained angular frequency of the unforced system, or None.

    Requires amplitude == 0.  Integrates past the transient, then counts
    interpolated upward crossings of the mean-removed first component.
    Quiescence (None) is reported when the excursion is below quiescent_tol,
    when fewer than two crossings occur, or when the oscillation is a decaying
    ring-down (second half of the window much smaller than the first).
    """
    if params.amplitude != 0:
        raise DomainError("frequency measurement requires amplitude == 0")
    if state0 is None:
        state0 = NetworkState(np.full(params.n_osc, 0.5), np.zeros(params.n_osc))
    settled = integrate(state0, params, het, settle_time, dt=dt)
    x = settled.x[None, :].copy()
    y = settled.y[None, :].copy()
    pre = np.ascontiguousarray((params.phi + params.beta * het.mu)[None, :])
    times, xs, _ = _record_arrays(x, y, pre, settled.t, measure_time, dt,
                                  params.epsilon, params.amplitude, params.omega,
                                  stride=1)
    sig = xs[:, 0, 0]
    half = sig.size // 2
    ptp_late = np.ptp(sig[half:])
    if ptp_late < quiescent_tol or ptp_late < 0.25 * np.ptp(sig[:half]):
        return None
    sig = sig - sig.mean()
    up = np.nonzero((sig[:-1] < 0) & (sig[1:] >= 0))[0]
    if up.size < 2:
        return None
    # linear interpolation of each crossing time
    frac = sig[up] / (sig[up] - sig[up + 1])
    t_cross = times[up] + frac * (times[up + 1] - times[up])
    period = (t_cross[-1] - t_cross[0]) / (t_cross.size - 1)
    return 2.0 * math.pi / period
