"""Compiled fixed-step RK4 kernels.

Everything here is deliberately dumb: float64 arrays in, per-network status
codes out, no Python objects.  Shapes are (B, N) where B indexes independent
networks integrated with the same (eps, amp, omega) but possibly different
per-oscillator excitability `pre[b, j] = phi + beta * mu[b, j]`.

The forcing phase is evaluated at the exact stage times, so trajectories are
invariant under splitting a run into sub-runs at step boundaries.
"""

import numpy as np
from numba import njit

# status convention: 0 = ok, k > 0 = first component left the trust region
# while completing step k (1-based)


@njit(cache=True)
def _advance(x, y, pre, b, t, h, eps, amp, omega, ax, ay, sx, sy):
    """One classical RK4 step of size h for network b, in place."""
    n = x.shape[1]

    # stage 1 at t
    m = 0.0
    for j in range(n):
        m += x[b, j]
    m /= n
    f = amp * np.sin(omega * t)
    for j in range(n):
        xj = x[b, j]
        kx = y[b, j] - xj * (xj * xj / 3.0 - pre[b, j]) + 0.5 * xj * xj - eps * (xj - m)
        ky = f - xj
        sx[j] = kx
        sy[j] = ky
        ax[j] = xj + 0.5 * h * kx
        ay[j] = y[b, j] + 0.5 * h * ky

    # stage 2 at t + h/2
    m = 0.0
    for j in range(n):
        m += ax[j]
    m /= n
    f = amp * np.sin(omega * (t + 0.5 * h))
    for j in range(n):
        xj = ax[j]
        kx = ay[j] - xj * (xj * xj / 3.0 - pre[b, j]) + 0.5 * xj * xj - eps * (xj - m)
        ky = f - xj
        sx[j] += 2.0 * kx
        sy[j] += 2.0 * ky
        ax[j] = x[b, j] + 0.5 * h * kx
        ay[j] = y[b, j] + 0.5 * h * ky

    # stage 3 at t + h/2 (same forcing value as stage 2)
    m = 0.0
    for j in range(n):
        m += ax[j]
    m /= n
    for j in range(n):
        xj = ax[j]
        kx = ay[j] - xj * (xj * xj / 3.0 - pre[b, j]) + 0.5 * xj * xj - eps * (xj - m)
        ky = f - xj
        sx[j] += 2.0 * kx
        sy[j] += 2.0 * ky
        ax[j] = x[b, j] + h * kx
        ay[j] = y[b, j] + h * ky

    # stage 4 at t + h
    m = 0.0
    for j in range(n):
        m += ax[j]
    m /= n
    f = amp * np.sin(omega * (t + h))
    for j in range(n):
        xj = ax[j]
        kx = ay[j] - xj * (xj * xj / 3.0 - pre[b, j]) + 0.5 * xj * xj - eps * (xj - m)
        ky = f - xj
        sx[j] += kx
        sy[j] += ky

    for j in range(n):
        x[b, j] += h / 6.0 * sx[j]
        y[b, j] += h / 6.0 * sy[j]


@njit(cache=True)
def rk4_batch(x, y, pre, t0, dt, nsteps, rem, eps, amp, omega, guard):
    """Advance all networks by nsteps steps of dt plus one step of rem.

    rem == 0.0 skips the remainder step.  Mutates x, y.  Returns an int64
    status array of shape (B,).
    """
    nb, n = x.shape
    status = np.zeros(nb, np.int64)
    ax = np.empty(n)
    ay = np.empty(n)
    sx = np.empty(n)
    sy = np.empty(n)
    for b in range(nb):
        t = t0
        for i in range(nsteps):
            _advance(x, y, pre, b, t, dt, eps, amp, omega, ax, ay, sx, sy)
            t = t0 + (i + 1) * dt
            bad = False
            for j in range(n):
                if not (abs(x[b, j]) < guard and abs(y[b, j]) < guard):
                    bad = True
            if bad:
                status[b] = i + 1
                break
        if status[b] == 0 and rem > 0.0:
            _advance(x, y, pre, b, t, rem, eps, amp, omega, ax, ay, sx, sy)
            bad = False
            for j in range(n):
                if not (abs(x[b, j]) < guard and abs(y[b, j]) < guard):
                    bad = True
            if bad:
                status[b] = nsteps + 1
    return status


@njit(cache=True)
def rk4_record(x, y, pre, t0, dt, nsteps, rem, eps, amp, omega, guard,
               record_steps, out_x, out_y):
    """Like rk4_batch but snapshots states at the given completed-step counts.

    record_steps must be strictly increasing; count 0 means the initial state
    and count nsteps + 1 means the state after the remainder step.  out_x and
    out_y are (len(record_steps), B, N).
    """
    nb, n = x.shape
    ntot = nsteps + (1 if rem > 0.0 else 0)
    nrec = record_steps.shape[0]
    status = np.zeros(nb, np.int64)
    ax = np.empty(n)
    ay = np.empty(n)
    sx = np.empty(n)
    sy = np.empty(n)
    for b in range(nb):
        ptr = 0
        if nrec > 0 and record_steps[0] == 0:
            for j in range(n):
                out_x[0, b, j] = x[b, j]
                out_y[0, b, j] = y[b, j]
            ptr = 1
        t = t0
        for i in range(ntot):
            h = dt if i < nsteps else rem
            _advance(x, y, pre, b, t, h, eps, amp, omega, ax, ay, sx, sy)
            t = t0 + (i + 1) * dt if i + 1 <= nsteps else t0 + nsteps * dt + rem
            bad = False
            for j in range(n):
                if not (abs(x[b, j]) < guard and abs(y[b, j]) < guard):
                    bad = True
            if bad:
                status[b] = i + 1
                break
            if ptr < nrec and record_steps[ptr] == i + 1:
                for j in range(n):
                    out_x[ptr, b, j] = x[b, j]
                    out_y[ptr, b, j] = y[b, j]
                ptr += 1
    return status
