"""Exception hierarchy shared across the package.

Callers that need to distinguish "bad input" from "the computation blew up"
can catch ``DomainError`` and ``NumericalError`` respectively; everything
else derives from those two.
"""

from __future__ import annotations


class VdpChaosError(Exception):
    """Base class for all package-specific errors."""


class DomainError(VdpChaosError):
    """Invalid argument values or an operation outside its supported regime."""


class ConfigError(DomainError):
    """Invalid experiment configuration; message carries the offending field path."""

    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")


class NumericalError(VdpChaosError):
    """A computation failed for numerical reasons (divergence, no convergence)."""


class DivergenceError(NumericalError):
    """Trajectory left the trust region |x_i|, |y_i| < guard.

    Attributes
    ----------
    time : float
        Simulation time at which the blow-up was detected.
    seed : int or None
        Realization seed of the failing ensemble member, when applicable.
    cycle : int or None
        Projective-integration cycle index, when applicable.
    """

    def __init__(self, time: float, seed: int | None = None, cycle: int | None = None):
        self.time = time
        self.seed = seed
        self.cycle = cycle
        parts = [f"trajectory diverged at t = {time:.6g}"]
        if seed is not None:
            parts.append(f"realization seed {seed}")
        if cycle is not None:
            parts.append(f"projective cycle {cycle}")
        super().__init__(", ".join(parts))


class ProjectionOvershootError(NumericalError):
    """Polynomial extrapolation produced a non-finite coarse state."""

    def __init__(self, cycle: int):
        self.cycle = cycle
        super().__init__(
            f"projective jump at cycle {cycle} produced a non-finite coarse state; "
            "reduce the projection horizon"
        )


class IllPosedRestrictionError(DomainError):
    """Least-squares restriction is rank deficient for the given nodes and order."""


class NewtonError(NumericalError):
    """Newton iteration for a coarse fixed point failed."""


class SingularJacobianError(NewtonError):
    """(J - I) is singular at the current iterate.

    This is the signature of a fold: the fixed-point map has a turning point
    in the active parameter and plain Newton cannot cross it.  Continue the
    branch in pseudo-arclength instead of parameter stepping.
    """


class ContinuationError(NumericalError):
    """Pseudo-arclength continuation could not produce a first accepted point."""


class NotABifurcationError(DomainError):
    """The supplied bracket does not contain a sign change of the test function."""


class ResonanceAmbiguityError(NumericalError):
    """Critical eigenvalue pair collapsed onto the real axis during refinement.

    Near strong resonances the complex pair merges and the rotation number
    theta is undefined; the caller must reseed the bracket away from the
    resonance before refining again.
    """
