"""Joint factor modeling for prediction with many more predictors than rows.

The model couples a k-factor decomposition of the predictors with an
unrestricted predictor/response covariance, so prediction does not have to
assume the response loads only on the dominant factor directions.  The
package provides the exact Gaussian algebra, a Gibbs sampler for the
factor part, a two-penalty ridge on the augmented design of factor scores
and standardized residuals, classical comparators, spike-and-slab
selection at desk scale, and reproducible study harnesses behind a CLI.
"""

__version__ = "0.1.0"

from .baselines import (LinearFit, covariance_ridge, gprior_estimator, lars,
                        nig_regression, pcr, pls, ridge_estimator,
                        whiten_equivalence_check)
from .experiments import (BenchmarkReport, MetricsTable, ScenarioConfig,
                          StudyOptions, benchmark_real, example1_components,
                          example2_study, generate_simulation_dataset,
                          kl_closest_factor, kl_gaussian, simulation_study)
from .gibbs import (FactorPosterior, FactorPriors, choose_k, dump_draws,
                    factor_score_conditional, gibbs_factor)
from .model import (DataMatrix, FactorModel, JointCovariance,
                    PartialFactorModel, center, conditional_moments,
                    full_covariance, implied_beta, joint_covariance,
                    log_likelihood, marginal_covariance, residual_variance,
                    sample_joint)
from .regression import (AugmentedDesign, PfrFit, PfrPipeline, augment,
                         cross_validate, fit_pfr, predict, two_penalty_ridge)
from .report import ParseError, emit_csv, ingest_csv
from .selection import (LambdaModel, SelectionChain, SelectionPriors,
                        SubspaceEstimate, conditional_mean_reduced,
                        reparametrize, spike_slab_sampler, subspace_estimate,
                        three_question_report)

__all__ = [
    "AugmentedDesign", "BenchmarkReport", "DataMatrix", "FactorModel",
    "FactorPosterior", "FactorPriors", "JointCovariance", "LambdaModel",
    "LinearFit", "MetricsTable", "ParseError", "PartialFactorModel", "PfrFit",
    "PfrPipeline", "ScenarioConfig", "SelectionChain", "SelectionPriors",
    "StudyOptions", "SubspaceEstimate", "augment", "benchmark_real", "center",
    "choose_k", "conditional_mean_reduced", "conditional_moments",
    "covariance_ridge", "cross_validate", "dump_draws", "emit_csv",
    "example1_components", "example2_study", "factor_score_conditional",
    "fit_pfr", "full_covariance", "generate_simulation_dataset",
    "gibbs_factor", "gprior_estimator", "implied_beta", "ingest_csv",
    "joint_covariance", "kl_closest_factor", "kl_gaussian", "lars",
    "log_likelihood", "marginal_covariance", "nig_regression", "pcr", "pls",
    "predict", "reparametrize", "residual_variance", "ridge_estimator",
    "sample_joint", "simulation_study", "spike_slab_sampler",
    "subspace_estimate", "three_question_report", "two_penalty_ridge",
    "whiten_equivalence_check",
]
