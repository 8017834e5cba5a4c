"""Asymptotic mutual information and MMSE for AR(1) stochastic regression.

A library + CLI that evaluates replica-symmetric fixed-point predictions
(mutual information, per-block MMSE, measurement MMSE) for high-dimensional
linear regression whose design columns are stationary AR(1) paths, and
validates them against Monte Carlo simulation with a VAMP estimator and
exact Gaussian-prior posteriors.
"""

from .priors import (PriorSpec, posterior_mean_denoiser, scalar_mmse,
                     scalar_mutual_info)
from .replica import (PredictionReport, ReplicaProblem, ReplicaSolution,
                      SolverOptions, continuous_convergence_study,
                      find_transitions, fixed_point_solve, locate_transition,
                      mutual_info_limit, predicted_ymmse, prediction_report,
                      rs_potential, solve_replica, solve_replica_continuous,
                      verify_solution, ymmse_from_block_mmse)
from .spectra import (SpectrumSpec, generating_function, kms_eigenvalue_cdf,
                      kms_matrix, r1_map, spectral_integral)
from .synth import (InstanceSpec, ProblemInstance, empirical_block_mmse,
                    empirical_ymmse, exact_gaussian_posterior, load_instance,
                    sample_instance, save_instance)
from .vamp import (StabilityReport, VampConfig, VampTrace, design_svd,
                   rotate_gaussian_instance, stability_report, vamp_run)

__version__ = "0.1.0"
