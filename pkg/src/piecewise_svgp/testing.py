"""Seeded random problem instances for tests and oracle comparisons."""

import numpy as np

from .elbo import Regularizer
from .kernels import KernelParams
from .piecewise import PiecewiseLink, discretize_link, sigmoid_link, uniform_partition
from .svgp import SVGPModel, VariationalDist
from .train import Problem

K_CHOICES = (4, 16, 64)


def random_model(rng, M, d, with_noise=False):
    Z = rng.normal(size=(M, d))
    L = np.tril(rng.normal(scale=0.3, size=(M, M)), -1) + np.diag(rng.uniform(0.3, 1.0, M))
    vd = VariationalDist.from_cholesky(rng.normal(scale=1.0, size=M), L)
    kp = KernelParams(rng.uniform(-0.5, 0.5), rng.uniform(-0.3, 0.5))
    return SVGPModel(Z, vd, kp, log_noise=rng.uniform(-1.5, 0.0) if with_noise else None)


def random_instance(variant, seed, regularizer="none", trainable=True, N=None, M=None, K=None):
    """A random :class:`Problem` with ``N <= 20``, ``M <= 5`` and ``K`` in (4, 16, 64).

    ``learnable_gauss`` takes ``regularizer`` in {none, l2_to_constant,
    l2_to_reference, bayes_prior}; the last one switches the link to Gaussian
    levels.
    """
    rng = np.random.default_rng(seed)
    N = N or int(rng.integers(5, 21))
    M = M or int(rng.integers(1, 6))
    K = K or int(rng.choice(K_CHOICES))
    d = int(rng.integers(1, 3))
    X = rng.normal(size=(N, d))
    p = uniform_partition(K, -3.0, 3.0)
    reg = None
    if variant == "bernoulli":
        models = [random_model(rng, M, d)]
        if trainable:
            link = sigmoid_link(p, trainable=True)
            link.raw = link.raw + rng.normal(scale=0.5, size=K)
        else:
            link = discretize_link("sigmoid", p)
        y = rng.integers(0, 2, size=N).astype(float)
        if regularizer != "none":
            reg = Regularizer(regularizer, lam=rng.uniform(0.1, 2.0), c=0.5, reference="sigmoid")
    elif variant == "hetero_gauss":
        models = [random_model(rng, M, d), random_model(rng, M, d)]
        link = discretize_link("exp", p)
        y = rng.normal(scale=1.5, size=N)
    elif variant == "learnable_gauss":
        models = [random_model(rng, M, d, with_noise=True)]
        reps = p.reps
        if regularizer == "bayes_prior":
            link = PiecewiseLink(p, reps + rng.normal(scale=0.3, size=K), mode="trainable-gaussian",
                                 raw_log_var=np.log(rng.uniform(0.05, 0.5, K)), name="identity")
            reg = Regularizer("bayes_prior", prior_var=rng.uniform(0.5, 2.0))
        else:
            link = PiecewiseLink(p, reps + rng.normal(scale=0.3, size=K),
                                 mode="trainable-point" if trainable else "fixed", name="identity")
            if regularizer != "none":
                reg = Regularizer(regularizer, lam=rng.uniform(0.1, 2.0), c=0.2, reference="identity")
        y = rng.normal(scale=1.5, size=N)
    elif variant == "gauss":
        models = [random_model(rng, M, d, with_noise=True)]
        link = None
        y = rng.normal(size=N)
    else:
        raise ValueError(variant)
    return Problem(variant, models, link, X, y, reg)
