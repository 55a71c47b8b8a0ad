"""Coarse stroboscopic map and its fixed points.

The coarse time-T map h(Z) lifts a coarse state to a fine network state at
forcing phase zero, integrates one forcing period, and restricts back.  The
realization-averaged map averages h over an ensemble of heterogeneity
draws held fixed across all evaluations (common random numbers), which makes
finite-difference derivatives of the averaged map smooth in both the state
and the parameters.

CoarseEvaluator is the batching engine: every map evaluation, Jacobian
column, and parameter derivative is funneled through map_many, which groups
evaluations sharing (omega, amplitude, epsilon) into single compiled-kernel
calls across ensemble members.  Excitability enters the kernel only through
the per-oscillator array phi + beta * mu, so phi and beta perturbations ride
in one batch.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .chaos import ChaosCoeffs, design_matrix, lift, restrict
from .errors import DomainError, DivergenceError, NewtonError, SingularJacobianError
from .network import (DEFAULT_DT, DEFAULT_GUARD, Heterogeneity, ModelParams,
                      NetworkState, _integrate_arrays, strobe_full)


@dataclass(frozen=True)
class CoarseMapConfig:
    """Numerical settings of the averaged coarse map and its Newton solver.

    realization_seeds are the common-random-number seeds; their order is the
    averaging order, so results are bit-reproducible for a fixed tuple.
    """

    q: int = 1
    realization_seeds: tuple[int, ...] = tuple(range(20))
    fd_step: float = 1e-5
    newton_tol: float = 1e-8
    newton_max_iter: int = 25
    dt: float = DEFAULT_DT
    guard: float = DEFAULT_GUARD

    def __post_init__(self):
        if self.q < 0:
            raise DomainError(f"q must be >= 0, got {self.q}")
        if len(self.realization_seeds) < 1:
            raise DomainError("need at least one realization seed")
        if len(set(self.realization_seeds)) != len(self.realization_seeds):
            raise DomainError("realization seeds must be distinct")
        if self.fd_step <= 0 or self.newton_tol <= 0 or self.dt <= 0:
            raise DomainError("fd_step, newton_tol and dt must be > 0")
        if self.newton_max_iter < 1:
            raise DomainError("newton_max_iter must be >= 1")

    @property
    def r(self) -> int:
        return len(self.realization_seeds)

    @property
    def dim(self) -> int:
        return 2 * (self.q + 1)

    @classmethod
    def default(cls, q: int = 1, r: int = 20, base_seed: int = 0, **kwargs):
        return cls(q=q, realization_seeds=tuple(base_seed + k for k in range(r)),
                   **kwargs)


class _EvaluatorBase:
    """Shared finite-difference machinery on top of a batched vector map.

    Subclasses provide map_many(items) with items a sequence of
    (vector, ModelParams) pairs, returning the mapped vectors row-wise.
    """

    fd_step: float = 1e-5

    def map_many(self, items):
        raise NotImplementedError

    def map(self, z: np.ndarray, params: ModelParams) -> np.ndarray:
        return self.map_many([(z, params)])[0]

    def _param_step(self, params: ModelParams, name: str) -> float:
        return self.fd_step * max(1.0, abs(getattr(params, name)))

    def jacobian(self, z: np.ndarray, params: ModelParams) -> np.ndarray:
        """Central finite-difference Jacobian of the map at z."""
        z = np.asarray(z, dtype=np.float64)
        m = z.size
        items = []
        for k in range(m):
            e = np.zeros(m)
            e[k] = self.fd_step
            items.append((z + e, params))
            items.append((z - e, params))
        vals = self.map_many(items)
        jac = np.empty((m, m))
        for k in range(m):
            jac[:, k] = (vals[2 * k] - vals[2 * k + 1]) / (2.0 * self.fd_step)
        return jac

    def newton_data(self, z: np.ndarray, params: ModelParams,
                    pname: str | None = None):
        """(h(z), Jacobian, dh/dp) in a single batched sweep; dh/dp is None
        when pname is None."""
        z = np.asarray(z, dtype=np.float64)
        m = z.size
        items = [(z, params)]
        for k in range(m):
            e = np.zeros(m)
            e[k] = self.fd_step
            items.append((z + e, params))
            items.append((z - e, params))
        if pname is not None:
            dp = self._param_step(params, pname)
            p0 = getattr(params, pname)
            items.append((z, dataclasses.replace(params, **{pname: p0 + dp})))
            items.append((z, dataclasses.replace(params, **{pname: p0 - dp})))
        vals = self.map_many(items)
        hz = vals[0]
        jac = np.empty((m, m))
        for k in range(m):
            jac[:, k] = (vals[1 + 2 * k] - vals[2 + 2 * k]) / (2.0 * self.fd_step)
        c = None
        if pname is not None:
            c = (vals[-2] - vals[-1]) / (2.0 * dp)
        return hz, jac, c

    def directional(self, z: np.ndarray, params: ModelParams,
                    v: np.ndarray) -> np.ndarray:
        """J v by central differencing along v (two map evaluations)."""
        v = np.asarray(v, dtype=np.float64)
        nv = float(np.linalg.norm(v))
        if nv == 0.0:
            return np.zeros_like(v)
        eta = self.fd_step / nv
        vals = self.map_many([(z + eta * v, params), (z - eta * v, params)])
        return (vals[0] - vals[1]) / (2.0 * eta)


class CoarseEvaluator(_EvaluatorBase):
    """Realization-averaged coarse stroboscopic map as a plain vector map."""

    def __init__(self, config: CoarseMapConfig):
        self.config = config
        self.fd_step = config.fd_step
        self._bundles: dict[int, tuple] = {}

    def _bundle(self, n_osc: int):
        """Per-network-size cache: node stacks, lift bases, restriction maps."""
        got = self._bundles.get(n_osc)
        if got is not None:
            return got
        q = self.config.q
        mus, vans, pinvs = [], [], []
        for seed in self.config.realization_seeds:
            het = Heterogeneity.draw(n_osc, seed)
            v = design_matrix(het, q)
            mus.append(het.mu)
            vans.append(v)
            pinvs.append(np.linalg.pinv(v))
        bundle = (np.stack(mus), np.stack(vans), np.stack(pinvs))
        self._bundles[n_osc] = bundle
        return bundle

    def map_many(self, items) -> np.ndarray:
        """Averaged map at each (vector, params) pair, batched per kernel call.

        Items sharing (omega, amplitude, epsilon, n_osc) are integrated in one
        compiled call covering all ensemble members; phi and beta enter only
        through the per-oscillator excitability array, so they never split a
        batch.
        """
        cfg = self.config
        dim = cfg.dim
        seeds = cfg.realization_seeds
        r = cfg.r
        out = np.empty((len(items), dim))
        groups: dict[tuple, list[int]] = {}
        for idx, (z, params) in enumerate(items):
            z = np.asarray(z, dtype=np.float64)
            if z.shape != (dim,):
                raise DomainError(
                    f"coarse vector has length {z.size}, expected {dim} for q = {cfg.q}"
                )
            if not np.all(np.isfinite(z)):
                raise DomainError("coarse vector must be finite")
            key = (params.omega, params.amplitude, params.epsilon, params.n_osc)
            groups.setdefault(key, []).append(idx)
        for (omega, amplitude, epsilon, n_osc), idxs in groups.items():
            period = 2.0 * math.pi / omega if omega > 0 else None
            if period is None:
                raise DomainError(
                    f"stroboscopic map undefined for omega = {omega}; omega must be > 0"
                )
            mu_stack, van_stack, pinv_stack = self._bundle(n_osc)
            ni = len(idxs)
            avec = np.stack([np.asarray(items[i][0][: cfg.q + 1]) for i in idxs])
            bvec = np.stack([np.asarray(items[i][0][cfg.q + 1:]) for i in idxs])
            x0 = np.einsum("iq,rnq->irn", avec, van_stack)
            y0 = np.einsum("iq,rnq->irn", bvec, van_stack)
            pre = np.empty((ni, r, n_osc))
            for row, i in enumerate(idxs):
                p = items[i][1]
                pre[row] = p.phi + p.beta * mu_stack
            x = np.ascontiguousarray(x0.reshape(ni * r, n_osc))
            y = np.ascontiguousarray(y0.reshape(ni * r, n_osc))
            pre = np.ascontiguousarray(pre.reshape(ni * r, n_osc))
            labels = [seeds[b % r] for b in range(ni * r)]
            _integrate_arrays(x, y, pre, 0.0, period, cfg.dt, epsilon, amplitude,
                              omega, guard=cfg.guard, seed_labels=labels)
            xr = x.reshape(ni, r, n_osc)
            yr = y.reshape(ni, r, n_osc)
            # average in fixed seed order for bit reproducibility
            acoef = np.einsum("irn,rqn->irq", xr, pinv_stack).mean(axis=1)
            bcoef = np.einsum("irn,rqn->irq", yr, pinv_stack).mean(axis=1)
            for row, i in enumerate(idxs):
                out[i, : cfg.q + 1] = acoef[row]
                out[i, cfg.q + 1:] = bcoef[row]
        return out


class CallableMapEvaluator(_EvaluatorBase):
    """Wraps an arbitrary vector map func(z, params) behind the evaluator
    interface; used to exercise the fixed-point and continuation machinery on
    maps with known answers."""

    def __init__(self, func, fd_step: float = 1e-6):
        self.func = func
        self.fd_step = fd_step

    def map_many(self, items) -> np.ndarray:
        return np.stack([np.asarray(self.func(np.asarray(z, dtype=np.float64), p),
                                    dtype=np.float64)
                         for z, p in items])


@dataclass(eq=False)
class CoarseFixedPoint:
    """A converged fixed point of the averaged coarse map with its local data."""

    z: ChaosCoeffs
    residual: float
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    stable: bool
    iterations: int
    residual_history: tuple[float, ...]


def coarse_map(z: ChaosCoeffs, params: ModelParams, het: Heterogeneity,
               dt: float = DEFAULT_DT, guard: float = DEFAULT_GUARD) -> ChaosCoeffs:
    """Single-realization coarse stroboscopic map: restrict(flow_T(lift(z)))."""
    state = lift(z, het, t=0.0)
    mapped = strobe_full(state, params, het, n_periods=1, dt=dt, guard=guard)
    return restrict(mapped, het, z.q)


def averaged_map(z: ChaosCoeffs, params: ModelParams,
                 config: CoarseMapConfig,
                 evaluator: CoarseEvaluator | None = None) -> ChaosCoeffs:
    """Realization-averaged coarse map over the configured seed ensemble."""
    if evaluator is None:
        evaluator = CoarseEvaluator(config)
    try:
        vec = evaluator.map(z.to_vector(), params)
    except DivergenceError as err:
        raise DivergenceError(err.time, seed=err.seed) from err
    return ChaosCoeffs.from_vector(vec)


def coarse_jacobian(z: ChaosCoeffs, params: ModelParams,
                    config: CoarseMapConfig,
                    evaluator: CoarseEvaluator | None = None) -> np.ndarray:
    """Central finite-difference Jacobian of the averaged map at z.

    Common random numbers make the entries smooth in z despite the averaging.
    """
    if evaluator is None:
        evaluator = CoarseEvaluator(config)
    return evaluator.jacobian(z.to_vector(), params)


def newton_fixed_point(z0: ChaosCoeffs, params: ModelParams,
                       config: CoarseMapConfig,
                       evaluator: _EvaluatorBase | None = None) -> CoarseFixedPoint:
    """Newton's method on F(z) = h_avg(z) - z from the initial guess z0.

    Convergence is max-norm residual below config.newton_tol.  A singular
    (J - I) raises SingularJacobianError, the signature of a parameter fold;
    switch to pseudo-arclength continuation to get past it.
    """
    if evaluator is None:
        evaluator = CoarseEvaluator(config)
    z = z0.to_vector()
    eye = np.eye(z.size)
    history: list[float] = []
    for it in range(config.newton_max_iter):
        hz, jac, _ = evaluator.newton_data(z, params)
        f = hz - z
        res = float(np.max(np.abs(f)))
        history.append(res)
        if res < config.newton_tol:
            eigs = np.linalg.eigvals(jac)
            return CoarseFixedPoint(
                z=ChaosCoeffs.from_vector(z), residual=res, jacobian=jac,
                eigenvalues=eigs, stable=bool(np.all(np.abs(eigs) < 1.0)),
                iterations=it, residual_history=tuple(history))
        try:
            step = np.linalg.solve(jac - eye, -f)
        except np.linalg.LinAlgError as err:
            raise SingularJacobianError(
                "(J - I) is singular at the Newton iterate; this is what a "
                "fold in the active parameter looks like, use pseudo-arclength "
                "continuation"
            ) from err
        if not np.all(np.isfinite(step)):
            raise SingularJacobianError(
                "(J - I) is numerically singular at the Newton iterate; use "
                "pseudo-arclength continuation"
            )
        z = z + step
    raise NewtonError(
        f"no convergence in {config.newton_max_iter} iterations; residual "
        f"history {[f'{r:.3e}' for r in history]}"
    )


def relaxed_guess(z_rough: ChaosCoeffs, params: ModelParams, het: Heterogeneity,
                  periods: int = 30, dt: float = DEFAULT_DT) -> ChaosCoeffs:
    """Initial guess for Newton: relax the full system for a number of forcing
    periods from a lifted rough state, then restrict.

    Inside a locking tongue this lands close enough to the coarse fixed point
    that Newton converges in a few steps.
    """
    state = lift(z_rough, het, t=0.0)
    settled = strobe_full(state, params, het, n_periods=periods, dt=dt)
    return restrict(settled, het, z_rough.q)


def default_rough_guess(q: int) -> ChaosCoeffs:
    """A generic small-amplitude starting state for relaxation."""
    a = np.zeros(q + 1)
    a[0] = 0.5
    return ChaosCoeffs(a=a, b=np.zeros(q + 1))
