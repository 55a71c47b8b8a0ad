"""Polynomial chaos coarse-graining.

States of the heterogeneous network are compressed to coefficients of a
Hermite expansion in the excitability draws: x_i ~ sum_j a_j H_j(mu_i) and
likewise y_i with coefficients b_j, where H_j are physicists' Hermite
polynomials.  Restriction is a least-squares fit over the realized nodes
mu_i (solved by orthogonal factorization, never the normal equations);
lifting is plain polynomial evaluation, so restrict(lift(Z)) = Z whenever
the fit is well posed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import hermite as _herm

from .errors import DomainError, IllPosedRestrictionError
from .network import Heterogeneity, NetworkState


@dataclass(frozen=True, eq=False)
class ChaosCoeffs:
    """Coarse state: Hermite coefficients (a for x, b for y) of equal order."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.ascontiguousarray(self.a, dtype=np.float64)
        b = np.ascontiguousarray(self.b, dtype=np.float64)
        if a.ndim != 1 or a.shape != b.shape or a.size == 0:
            raise DomainError("a and b must be 1-d arrays of equal nonzero length")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise DomainError("coefficients must be finite")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def q(self) -> int:
        """Expansion order; len(a) == q + 1."""
        return self.a.shape[0] - 1

    def to_vector(self) -> np.ndarray:
        """Flatten to (a_0..a_q, b_0..b_q)."""
        return np.concatenate([self.a, self.b])

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "ChaosCoeffs":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.ndim != 1 or vec.size % 2 != 0 or vec.size == 0:
            raise DomainError("coarse vector must be 1-d with even length")
        half = vec.size // 2
        return cls(a=vec[:half], b=vec[half:])


def hermite_eval(j: int, z):
    """H_j(z) for the physicists' Hermite polynomials.

    H_0 = 1, H_1 = 2z, H_{j+1}(z) = 2z H_j(z) - 2j H_{j-1}(z).  Accepts a
    scalar or an ndarray.
    """
    if j < 0:
        raise DomainError(f"Hermite degree must be >= 0, got {j}")
    z = np.asarray(z, dtype=np.float64)
    h_prev = np.ones_like(z)
    if j == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    h = 2.0 * z
    for k in range(1, j):
        h, h_prev = 2.0 * z * h - 2.0 * k * h_prev, h
    return h if h.ndim else float(h)


def design_matrix(het: Heterogeneity, q: int) -> np.ndarray:
    """Vandermonde-type matrix V[i, j] = H_j(mu_i), shape (n_osc, q + 1).

    Raises IllPosedRestrictionError when there are fewer nodes than
    coefficients or fewer than q + 1 distinct node values.
    """
    if q < 0:
        raise DomainError(f"expansion order must be >= 0, got {q}")
    n = het.n_osc
    if n < q + 1:
        raise IllPosedRestrictionError(
            f"restriction of order {q} needs at least {q + 1} nodes, got {n}"
        )
    if np.unique(het.mu).size < q + 1:
        raise IllPosedRestrictionError(
            f"restriction of order {q} needs at least {q + 1} distinct node "
            "values"
        )
    return _herm.hermvander(het.mu, q)


def restrict(state: NetworkState, het: Heterogeneity, q: int) -> ChaosCoeffs:
    """Least-squares Hermite fit of the fine state at the realized nodes."""
    if state.n_osc != het.n_osc:
        raise DomainError(
            f"state has {state.n_osc} oscillators but heterogeneity has {het.n_osc}"
        )
    v = design_matrix(het, q)
    rhs = np.column_stack([state.x, state.y])
    coeffs, _, rank, _ = np.linalg.lstsq(v, rhs, rcond=None)
    if rank < q + 1:
        raise IllPosedRestrictionError(
            f"design matrix is rank deficient (rank {rank} < {q + 1})"
        )
    return ChaosCoeffs(a=coeffs[:, 0], b=coeffs[:, 1])


def lift(coeffs: ChaosCoeffs, het: Heterogeneity, t: float = 0.0) -> NetworkState:
    """Evaluate the Hermite expansion at the realized nodes."""
    x = _herm.hermval(het.mu, coeffs.a)
    y = _herm.hermval(het.mu, coeffs.b)
    return NetworkState(x=x, y=y, t=t)


def fit_residual(state: NetworkState, het: Heterogeneity, q: int) -> tuple[float, float]:
    """Normalized restriction residuals (for x, for y).

    Each entry is rms(data - fit) / std(data): 0 for data exactly in the
    expansion span, about 1 for data uncorrelated with the nodes.  Data with
    zero variance returns 0 by convention.
    """
    coeffs = restrict(state, het, q)
    fitted = lift(coeffs, het, state.t)
    out = []
    for data, fit in ((state.x, fitted.x), (state.y, fitted.y)):
        sigma = float(np.std(data))
        if sigma == 0.0:
            out.append(0.0)
        else:
            out.append(float(np.sqrt(np.mean((data - fit) ** 2)) / sigma))
    return out[0], out[1]
