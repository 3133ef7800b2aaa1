"""Sparse variational Gaussian processes with piecewise-constant inverse links.

The expected log-likelihood of a piecewise-constant link under a Gaussian
variational marginal is a finite sum over interval probabilities, so the
objective and its gradients are available in closed form.
"""

from .config import ExperimentConfig
from .elbo import (
    PredictiveMixture,
    Regularizer,
    bernoulli_elbo,
    gaussian_elbo,
    hetero_elbo,
    learnable_gauss_elbo,
    predictive_mixture,
    product_expectation,
)
from .errors import (
    ComplexityError,
    DimensionError,
    DomainError,
    NotPositiveDefiniteError,
    NumericalError,
)
from .kernels import KernelParams, cross_gram, gram, se_kernel
from .piecewise import (
    Partition,
    PiecewiseLink,
    discretize_link,
    exp_link_mse,
    interval_probs,
    lipschitz_mse_bound,
    sigmoid_link,
    uniform_partition,
)
from .svgp import GaussianMarginal, SVGPModel, VariationalDist, kl_term, marginal_q
from .train import fit

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "PredictiveMixture",
    "Regularizer",
    "bernoulli_elbo",
    "gaussian_elbo",
    "hetero_elbo",
    "learnable_gauss_elbo",
    "predictive_mixture",
    "product_expectation",
    "ComplexityError",
    "DimensionError",
    "DomainError",
    "NotPositiveDefiniteError",
    "NumericalError",
    "KernelParams",
    "cross_gram",
    "gram",
    "se_kernel",
    "Partition",
    "PiecewiseLink",
    "discretize_link",
    "exp_link_mse",
    "interval_probs",
    "lipschitz_mse_bound",
    "sigmoid_link",
    "uniform_partition",
    "GaussianMarginal",
    "SVGPModel",
    "VariationalDist",
    "kl_term",
    "marginal_q",
    "fit",
]
