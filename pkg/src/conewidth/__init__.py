"""conewidth: phase-transition quantities for random linear inverse problems.

Computes and cross-validates the statistical dimension of descent cones,
the Gaussian width, the standard upper bound on the statistical dimension,
the prior error estimate, and an improved error bound, for sparse,
block-sparse, low-rank, gradient-sparse, and l1-analysis models, together
with an equality-constrained recovery solver for locating the empirical
phase transition.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, DegenerateSignalError, DegenerateZ0Error,
                     InfeasibleDataError, InfeasibleSupportError,
                     InvalidDimensionError, InvalidParameterError,
                     InvalidRankError, ModeInfeasibleError,
                     NonConvergenceError, NotGeneralPositionError)
from .operators import (AnalysisOperator, load_operator, make_finite_difference,
                        make_identity, make_random1, make_random2, make_wavelet,
                        null_space_projector, philox_rng, save_operator)
from .scenarios import (StructuredSignal, analysis_support, gen_cosparse,
                        gen_failure_signal, gen_random1_tall_adversarial,
                        gen_simple_ground_truth, gen_tall_pair, load_signal,
                        save_signal)
from .subdifferentials import (SubdifferentialModel, build_model,
                               model_for_signal, sample_member,
                               sup_norm_extent, weak_decomposability_check,
                               z0_analysis)
from .geometry import (ConeDistanceResult, descent_width_sample, dist_cone,
                       dist_scaled, project_l1_ball)
from .estimators import (ErrorBoundReport, EstimateReport, beta, error_new,
                         error_prior, error_true, estimate_U_delta,
                         estimate_delta, estimate_width, estimate_width_primal,
                         foygel_gap, measurement_bounds, optimize_new_bound,
                         paired_estimates, u_delta_l1_closed_form,
                         u_delta_l12_closed_form)
from .recovery import (PhaseSweepResult, phase_sweep, recovery_success,
                       solve_Pf)
from .harness import RunConfig, cli_entry, run_figure, run_table
