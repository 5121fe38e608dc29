"""Exact uncertainty propagation through trained regression models.

Given a fitted linear or RBF-kernel model and a description of the input
uncertainty (multivariate Gaussian, or independent uniform / symmetric
triangular / Gaussian components), this package computes the exact mean and
variance of the model output in closed form, validates them against a
seeded Monte Carlo oracle, and measures how both approaches scale.
"""

from .bench import (
    BenchReport,
    BenchRow,
    SlopeFit,
    bachstein,
    compute_slopes,
    fit_slope,
    gen_bachstein_dataset,
    run_scaling_benchmark,
    synth_linear_problem,
)
from .distributions import (
    GaussianInput,
    IndependentInput,
    InputDistribution,
    Normal,
    Triangular,
    Uniform,
    UnivariateFamily,
    distribution_from_dict,
    distribution_to_dict,
    family_from_variance,
    family_moments,
    moments,
    rng_stream,
    sample,
    std_normal_cdf,
)
from .errors import ContractError, NumericalError, OracleFailure, UqpropError
from .kernel_models import (
    KernelModel,
    fit_gp,
    fit_kernel_ridge,
    from_external_alpha,
    gp_posterior_variance,
    kernel_from_dict,
    kernel_to_dict,
    log_marginal_likelihood,
    optimize_hyperparameters,
    predict_kernel,
)
from .kernels import RbfParams, kernel_matrix, kstar, kstar_matrix, rbf
from .linear import (
    CenteringTransform,
    LinearModel,
    Moments,
    credible_interval,
    fit_ols,
    fit_ridge,
    linear_from_dict,
    linear_to_dict,
    predict_linear,
    propagate_linear,
)
from .mc import MCEstimate, kappa_rmse, mc_propagate
from .propagation import (
    L_normal_1d,
    L_triangular_1d,
    L_uniform_1d,
    MomentVectors,
    l_normal_1d,
    l_triangular_1d,
    l_uniform_1d,
    moment_vectors_gaussian,
    moment_vectors_independent,
    propagate_kernel,
    quadrature_reference,
)

__version__ = "0.1.0"

__all__ = [
    "BenchReport",
    "BenchRow",
    "CenteringTransform",
    "ContractError",
    "GaussianInput",
    "IndependentInput",
    "InputDistribution",
    "KernelModel",
    "L_normal_1d",
    "L_triangular_1d",
    "L_uniform_1d",
    "LinearModel",
    "MCEstimate",
    "MomentVectors",
    "Moments",
    "Normal",
    "NumericalError",
    "OracleFailure",
    "RbfParams",
    "SlopeFit",
    "Triangular",
    "Uniform",
    "UnivariateFamily",
    "UqpropError",
    "bachstein",
    "compute_slopes",
    "credible_interval",
    "distribution_from_dict",
    "distribution_to_dict",
    "family_from_variance",
    "family_moments",
    "fit_gp",
    "fit_kernel_ridge",
    "fit_ols",
    "fit_ridge",
    "fit_slope",
    "from_external_alpha",
    "gen_bachstein_dataset",
    "gp_posterior_variance",
    "kappa_rmse",
    "kernel_from_dict",
    "kernel_matrix",
    "kernel_to_dict",
    "kstar",
    "kstar_matrix",
    "l_normal_1d",
    "l_triangular_1d",
    "l_uniform_1d",
    "linear_from_dict",
    "linear_to_dict",
    "log_marginal_likelihood",
    "mc_propagate",
    "moment_vectors_gaussian",
    "moment_vectors_independent",
    "moments",
    "optimize_hyperparameters",
    "predict_kernel",
    "predict_linear",
    "propagate_kernel",
    "propagate_linear",
    "quadrature_reference",
    "rbf",
    "rng_stream",
    "run_scaling_benchmark",
    "sample",
    "std_normal_cdf",
    "synth_linear_problem",
]
