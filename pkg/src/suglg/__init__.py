"""Bayesian inference for spatial data that are skewed, heavy-tailed, and
partially censored: a latent skew field scaled by a log-Gaussian mixing
field plus nugget, fitted by data-augmentation MCMC."""

from .distributions import (
    GigParams,
    SunParams,
    gig_logpdf,
    gig_sample,
    mvn_cdf,
    mvn_conditional,
    mvn_logpdf,
    sun_logpdf,
    sun_sample,
    tmvn_sample,
    tn1_sample,
    trunc_norm_interval_sample,
)
from .inference import (
    ComparisonReport,
    PredictionResult,
    dic,
    lpml,
    outlier_scores,
    predict,
    rmse,
    sensitivity,
)
from .model import (
    CensorInterval,
    Hyperparams,
    ModelKind,
    ModelParams,
    SpatialDataset,
    apply_left_censoring,
    conditional_loglik,
    default_simulation_truth,
    exact_conditional_loglik,
    holdout_lattice,
    inject_outliers,
    lambda_field_logpdf,
    log_prior,
    pseudo_regular_grid,
    simulate_dataset,
)
from .sampler import (
    ChainConfig,
    ChainOutput,
    McmcState,
    geweke_joint_test,
    initial_state,
    run_chain,
    step_alpha,
    step_beta,
    step_censored,
    step_lambda,
    step_nu,
    step_omega2,
    step_sigma2,
    step_theta,
    step_u,
)
from .spatial import (
    CorrelationSpec,
    LocationSet,
    build_b_matrix,
    distance_matrix,
    exp_correlation,
    jittered_cholesky,
    median_distance,
)

__version__ = "0.1.0"

__all__ = [
    "CensorInterval",
    "ChainConfig",
    "ChainOutput",
    "ComparisonReport",
    "CorrelationSpec",
    "GigParams",
    "Hyperparams",
    "LocationSet",
    "McmcState",
    "ModelKind",
    "ModelParams",
    "PredictionResult",
    "SpatialDataset",
    "SunParams",
    "apply_left_censoring",
    "build_b_matrix",
    "conditional_loglik",
    "default_simulation_truth",
    "dic",
    "distance_matrix",
    "exact_conditional_loglik",
    "exp_correlation",
    "geweke_joint_test",
    "gig_logpdf",
    "gig_sample",
    "holdout_lattice",
    "initial_state",
    "inject_outliers",
    "jittered_cholesky",
    "lambda_field_logpdf",
    "log_prior",
    "lpml",
    "median_distance",
    "mvn_cdf",
    "mvn_conditional",
    "mvn_logpdf",
    "outlier_scores",
    "predict",
    "pseudo_regular_grid",
    "rmse",
    "run_chain",
    "sensitivity",
    "simulate_dataset",
    "step_alpha",
    "step_beta",
    "step_censored",
    "step_lambda",
    "step_nu",
    "step_omega2",
    "step_sigma2",
    "step_theta",
    "step_u",
    "sun_logpdf",
    "sun_sample",
    "tmvn_sample",
    "tn1_sample",
    "trunc_norm_interval_sample",
    "__version__",
]
