"""Equation-free coarse analysis of forced heterogeneous van der Pol networks.

The fine model is a periodically forced network of modified van der Pol
oscillators with normally distributed excitability; the coarse description is
a short vector of polynomial chaos coefficients.  On top of the coarse
stroboscopic map the package provides projective integration, Newton fixed
points, pseudo-arclength continuation with fold and torus detection, and the
fine-scale diagnostics needed to tell numerical failure from genuine
breakdown of the coarse description.
"""

from .chaos import (ChaosCoeffs, design_matrix, fit_residual, hermite_eval,
                    lift, restrict)
from .coarse import (CallableMapEvaluator, CoarseEvaluator, CoarseFixedPoint,
                     CoarseMapConfig, averaged_map, coarse_jacobian,
                     coarse_map, default_rough_guess, newton_fixed_point,
                     relaxed_guess)
from .continuation import (Branch, BranchPoint, ContinuationConfig,
                           DesyncPolicy, TerminationRecord, continue_branch,
                           continue_fold_curve, continue_hopf_curve,
                           detect_fold, detect_hopf, fold_test, hopf_test,
                           locate_folds, locate_hopfs)
from .diagnostics import (SnapshotRecord, SyncReport, WalkthroughEstimate,
                          classify_synchrony, correlation_snapshot,
                          slip_period_from_series, walkthrough_period)
from .errors import (ConfigError, ContinuationError, DivergenceError,
                     DomainError, IllPosedRestrictionError, NewtonError,
                     NotABifurcationError, NumericalError,
                     ProjectionOvershootError, ResonanceAmbiguityError,
                     SingularJacobianError, VdpChaosError)
from .network import (Heterogeneity, ModelParams, NetworkState, integrate,
                      measure_angular_frequency, record_series, rhs,
                      strobe_full)
from .projective import (ProjectionSchedule, ProjectiveSeries,
                         RealizationSource, SpeedupResult, measure_speedup,
                         projective_integrate)

__version__ = "0.1.0"

# cli pulls __version__ back out of this module, so it has to come last
from .cli import (ExperimentConfig, NumericsConfig, build_config,  # noqa: E402
                  reproduce, run)

__all__ = [name for name in dir() if not name.startswith("_")]
