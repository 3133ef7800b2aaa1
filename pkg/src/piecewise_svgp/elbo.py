"""Closed-form variational objectives and predictive mixtures.

With a piecewise-constant inverse link the expected log-likelihood of a
Gaussian marginal reduces to a finite sum over intervals,
``sum_k h(g_k) P(l_k <= f < u_k)``, so every objective here is exact given
the link. Four objective variants are supported:

``bernoulli``
    Binary classification with levels ``g_k`` in ``(0, 1)``.
``hetero_gauss``
    Gaussian likelihood whose variance is ``g_k`` on the intervals of a
    second GP (an ``exp``-approximating link).
``learnable_gauss``
    Gaussian likelihood with mean ``g_k``, optionally with a Gaussian
    variational distribution ``q(g_k)`` under a Gaussian prior.
``gauss``
    Conjugate SVGP regression, used as a constant-variance baseline.
"""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ComplexityError, DimensionError, DomainError
from .math_core import kl_univariate_gauss, log_normal_density
from .piecewise import INVERSE_LINKS, interval_probs, interval_probs_and_grads, representatives
from .svgp import SVGPForward

VARIANTS = ("bernoulli", "hetero_gauss", "learnable_gauss", "gauss")
REGULARIZERS = ("none", "l2_to_constant", "l2_to_reference", "bayes_prior")
MAX_PRODUCT_FACTORS = 3
BERNOULLI_CLAMP = 1e-12


def piecewise_expectation(h_at_levels, probs):
    """``E[h(g_hat(f))]`` from ``h`` at the levels and the interval probabilities."""
    h = np.asarray(h_at_levels, dtype=np.float64)
    p = np.asarray(probs, dtype=np.float64)
    if h.shape != p.shape:
        raise DimensionError(f"{h.shape} levels vs {p.shape} probabilities")
    return float(np.sum(h * p))


def product_expectation(h, links, marginals):
    """``E[h(g1_hat(f1), ..., gC_hat(fC))]`` for independent Gaussian ``f_c``.

    Sums ``h`` over the cartesian product of level indices weighted by the
    product of interval probabilities. At most three factors are accepted.
    """
    if len(links) != len(marginals):
        raise DimensionError("one marginal per link is required")
    C = len(links)
    if C == 0:
        raise DimensionError("at least one factor is required")
    if C > MAX_PRODUCT_FACTORS:
        raise ComplexityError(
            f"{C} factors would need prod(K_c) = "
            f"{int(np.prod([l.K for l in links]))} terms; at most {MAX_PRODUCT_FACTORS} are supported"
        )
    probs = [interval_probs(l.partition, m) for l, m in zip(links, marginals)]
    grids = np.meshgrid(*[l.levels for l in links], indexing="ij")
    shape = grids[0].shape
    try:
        H = np.broadcast_to(np.asarray(h(*grids), dtype=np.float64), shape)
    except (TypeError, ValueError):
        H = np.empty(shape)
        for idx in itertools.product(*[range(n) for n in shape]):
            H[idx] = h(*[g[idx] for g in grids])
    W = probs[0]
    for p in probs[1:]:
        W = np.multiply.outer(W, p)
    return float(np.sum(H * W))


@dataclass
class Regularizer:
    """Penalty on trainable levels, or the Gaussian prior over them.

    ``l2_to_constant`` subtracts ``lam * sum (g_k - c)**2``; ``l2_to_reference``
    subtracts ``lam * sum (g_k - g(x_k))**2`` for a reference inverse link
    ``reference`` (callable or name); ``bayes_prior`` places ``N(prior_mean,
    prior_var)`` on each level (defaults: ``x_k`` and 1).
    """

    kind: str = "none"
    lam: float = 1.0
    c: float = 0.0
    reference: object = None
    prior_mean: object = None
    prior_var: object = 1.0

    def __post_init__(self):
        if self.kind not in REGULARIZERS:
            raise ValueError(f"unknown regularizer {self.kind!r}")
        if self.lam < 0:
            raise DomainError("regularization strength must be nonnegative")

    def target(self, link):
        if self.kind == "l2_to_constant":
            return np.full(link.K, float(self.c))
        ref = self.reference or "identity"
        g = INVERSE_LINKS[ref] if isinstance(ref, str) else ref
        return np.asarray(g(representatives(link.partition)), dtype=np.float64)

    def prior(self, link):
        mean = representatives(link.partition) if self.prior_mean is None else self.prior_mean
        mean = np.broadcast_to(np.asarray(mean, dtype=np.float64), (link.K,))
        var = np.broadcast_to(np.asarray(self.prior_var, dtype=np.float64), (link.K,))
        if np.any(var <= 0):
            raise DomainError("prior variances must be positive")
        return mean, var

    def penalty(self, link):
        """``(value, d/d raw)`` of the subtracted L2 penalty."""
        if self.kind not in ("l2_to_constant", "l2_to_reference"):
            return 0.0, np.zeros(link.K)
        r = link.levels - self.target(link)
        return float(self.lam * np.sum(r * r)), 2.0 * self.lam * r * link.levels_grad()


NO_REGULARIZER = Regularizer()


@dataclass
class Terms:
    value: float
    expectation: float
    kl: float
    penalty: float
    grads: dict = None


def _contract(H, P, dPm, dPv):
    return np.sum(H * P), np.sum(H * dPm, axis=1), np.sum(H * dPv, axis=1)


def _check_binary(y):
    y = np.asarray(y, dtype=np.float64)
    if not np.all((y == 0) | (y == 1)):
        raise DomainError("Bernoulli labels must be 0 or 1")
    return y


def _put_model_grads(grads, prefix, g):
    for k, v in g.items():
        grads[f"{prefix}.{k}"] = v


def _bernoulli(models, link, X, y, reg, grad):
    y = _check_binary(y)
    if reg.kind == "bayes_prior":
        raise ValueError("a level prior needs the Gaussian likelihood")
    fw = SVGPForward(models[0], X)
    P, dPm, dPv = interval_probs_and_grads(link.partition, fw.mean, fw.var)
    logg, log1g = link.log_levels()
    H = y[:, None] * logg + (1.0 - y)[:, None] * log1g
    E, gm, gv = _contract(H, P, dPm, dPv)
    pen, gpen = reg.penalty(link)
    value = E - fw.kl - pen
    if not grad:
        return Terms(value, E, fw.kl, pen)
    grads = {}
    _put_model_grads(grads, "gp", fw.backward(gm, gv, -1.0))
    if link.trainable:
        if link.transform == "sigmoid":
            dH = y[:, None] - link.levels[None, :]
        else:
            g = link.levels
            inside = (g > BERNOULLI_CLAMP) & (g < 1 - BERNOULLI_CLAMP)
            dH = np.where(inside, y[:, None] / g - (1 - y)[:, None] / (1 - g), 0.0)
        grads["link.raw"] = np.sum(P * dH, axis=0) - gpen
    return Terms(value, E, fw.kl, pen, grads)


def _hetero(models, link, X, y, reg, grad, paper_compat):
    y = np.asarray(y, dtype=np.float64)
    g = link.levels
    if np.any(g <= 0):
        raise DomainError("variance levels must be positive")
    fmu = SVGPForward(models[0], X)
    fs = SVGPForward(models[1], X)
    P, dPm, dPv = interval_probs_and_grads(link.partition, fs.mean, fs.var)
    mu, Sig = fmu.mean[:, None], fmu.var[:, None]
    r2 = (y[:, None] - mu) ** 2
    if paper_compat:
        H = log_normal_density(y[:, None], mu, g[None, :] + Sig) - 0.5 * Sig / g[None, :]
    else:
        H = log_normal_density(y[:, None], mu, g[None, :]) - 0.5 * Sig / g[None, :]
    E, gm, gv = _contract(H, P, dPm, dPv)
    pen, gpen = reg.penalty(link)
    kl = fmu.kl + fs.kl
    value = E - kl - pen
    if not grad:
        return Terms(value, E, kl, pen)
    if paper_compat:
        raise NotImplementedError("the printed-formula mode is for evaluation only")
    grads = {}
    g_mu = np.sum(P * (y[:, None] - mu) / g[None, :], axis=1)
    g_Sig = -0.5 * np.sum(P / g[None, :], axis=1)
    _put_model_grads(grads, "gp", fmu.backward(g_mu, g_Sig, -1.0))
    _put_model_grads(grads, "gp_var", fs.backward(gm, gv, -1.0))
    if link.trainable:
        dH = -0.5 / g[None, :] + 0.5 * (r2 + Sig) / g[None, :] ** 2
        grads["link.raw"] = np.sum(P * dH, axis=0) * link.levels_grad() - gpen
    return Terms(value, E, kl, pen, grads)


def _learnable(models, link, X, y, reg, grad, paper_compat):
    y = np.asarray(y, dtype=np.float64)
    model = models[0]
    if model.log_noise is None:
        raise ValueError("learnable_gauss needs a model with a noise variance")
    s2 = model.noise
    gaussian = link.mode == "trainable-gaussian"
    if gaussian != (reg.kind == "bayes_prior"):
        raise ValueError("Gaussian levels and the bayes_prior regularizer go together")
    fw = SVGPForward(model, X)
    P, dPm, dPv = interval_probs_and_grads(link.partition, fw.mean, fw.var)
    m = link.levels[None, :]
    r = y[:, None] - m
    if gaussian:
        lv = link.level_var[None, :]
        if paper_compat:
            H = log_normal_density(y[:, None], m, s2 + lv) - 0.5 * lv / s2
        else:
            H = log_normal_density(y[:, None], m, s2) - 0.5 * lv / s2
        pm, pv = reg.prior(link)
        prior_kl = float(np.sum(kl_univariate_gauss(link.levels, link.level_var, pm, pv)))
        pen, gpen = prior_kl, None
    else:
        H = log_normal_density(y[:, None], m, s2)
        pen, gpen = reg.penalty(link)
    E, gm, gv = _contract(H, P, dPm, dPv)
    value = E - fw.kl - pen
    if not grad:
        return Terms(value, E, fw.kl, pen)
    if paper_compat:
        raise NotImplementedError("the printed-formula mode is for evaluation only")
    grads = {}
    _put_model_grads(grads, "gp", fw.backward(gm, gv, -1.0))
    sq = r * r + (lv if gaussian else 0.0)
    grads["gp.log_noise"] = float(np.sum(P * (-0.5 + 0.5 * sq / s2)))
    if link.trainable:
        g_raw = np.sum(P * r, axis=0) / s2 * link.levels_grad()
        if gaussian:
            var = link.level_var
            grads["link.raw"] = g_raw - (link.levels - pm) / pv
            grads["link.log_var"] = -0.5 * var / s2 * np.sum(P, axis=0) - 0.5 * (var / pv - 1.0)
        else:
            grads["link.raw"] = g_raw - gpen
    return Terms(value, E, fw.kl, pen, grads)


def _gauss(models, X, y, grad):
    y = np.asarray(y, dtype=np.float64)
    model = models[0]
    if model.log_noise is None:
        raise ValueError("the Gaussian baseline needs a model with a noise variance")
    s2 = model.noise
    fw = SVGPForward(model, X)
    r = y - fw.mean
    terms = log_normal_density(y, fw.mean, s2) - 0.5 * fw.var / s2
    E = np.sum(terms)
    value = E - fw.kl
    if not grad:
        return Terms(value, E, fw.kl, 0.0)
    grads = {}
    _put_model_grads(grads, "gp", fw.backward(r / s2, np.full_like(r, -0.5 / s2), -1.0))
    grads["gp.log_noise"] = float(np.sum(-0.5 + 0.5 * (r * r + fw.var) / s2))
    return Terms(value, E, fw.kl, 0.0, grads)


def objective_terms(variant, models, link, X, y, regularizer=None, grad=False, paper_compat=False):
    """Evaluate an objective and, optionally, its gradients by parameter block.

    Gradient keys are ``gp.<name>`` for the (mean) GP, ``gp_var.<name>`` for
    the variance GP of ``hetero_gauss``, and ``link.raw`` / ``link.log_var``
    for trainable levels.
    """
    reg = regularizer or NO_REGULARIZER
    if variant == "bernoulli":
        return _bernoulli(models, link, X, y, reg, grad)
    if variant == "hetero_gauss":
        return _hetero(models, link, X, y, reg, grad, paper_compat)
    if variant == "learnable_gauss":
        return _learnable(models, link, X, y, reg, grad, paper_compat)
    if variant == "gauss":
        return _gauss(models, X, y, grad)
    raise ValueError(f"unknown objective variant {variant!r}")


def bernoulli_elbo(model, link, X, y, regularizer=None):
    return float(objective_terms("bernoulli", [model], link, X, y, regularizer).value)


def hetero_elbo(mean_model, var_model, exp_link, X, y, paper_compat=False):
    return float(objective_terms("hetero_gauss", [mean_model, var_model], exp_link, X, y,
                                 paper_compat=paper_compat).value)


def learnable_gauss_elbo(model, link, X, y, regularizer=None, paper_compat=False):
    return float(objective_terms("learnable_gauss", [model], link, X, y, regularizer,
                                 paper_compat=paper_compat).value)


def gaussian_elbo(model, X, y):
    return float(objective_terms("gauss", [model], None, X, y).value)


@dataclass
class PredictiveMixture:
    """Per-row ``K``-component predictive mixtures, stored as ``(N, K)`` arrays.

    ``weights`` are interval probabilities. Bernoulli components carry
    ``comp_mean = g_k`` (the success probability) and no variance; Gaussian
    components carry a mean and a variance.
    """

    variant: str
    weights: np.ndarray
    comp_mean: np.ndarray
    comp_var: np.ndarray = None

    def __len__(self):
        return self.weights.shape[0]

    @property
    def K(self):
        return self.weights.shape[1]

    def mean(self):
        return np.sum(self.weights * self.comp_mean, axis=1)

    def class_prob(self):
        if self.variant != "bernoulli":
            raise ValueError("class probabilities exist only for the Bernoulli likelihood")
        return np.clip(self.mean(), 0.0, 1.0)

    def log_density(self, y):
        y = np.asarray(y, dtype=np.float64)
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
            if self.variant == "bernoulli":
                p = self.comp_mean
                lc = np.where(y[:, None] == 1, np.log(p), np.log1p(-p))
            else:
                lc = log_normal_density(y[:, None], self.comp_mean, self.comp_var)
        return logsumexp(logw + lc, axis=1)


def predictive_mixture(models, link, Xstar, variant):
    """Posterior predictive at ``Xstar`` as a mixture over link intervals."""
    if not isinstance(models, (list, tuple)):
        models = [models]
    if variant == "gauss":
        fw = SVGPForward(models[0], Xstar)
        n = fw.mean.shape[0]
        return PredictiveMixture(variant, np.ones((n, 1)), fw.mean[:, None],
                                 (fw.var + models[0].noise)[:, None])
    if variant == "hetero_gauss":
        fmu = SVGPForward(models[0], Xstar)
        P = interval_probs(link.partition, _marg(models[1], Xstar))
        g = link.levels[None, :]
        return PredictiveMixture(variant, P, np.broadcast_to(fmu.mean[:, None], P.shape).copy(),
                                 fmu.var[:, None] + g)
    P = interval_probs(link.partition, _marg(models[0], Xstar))
    if variant == "bernoulli":
        p = np.clip(link.levels, BERNOULLI_CLAMP, 1 - BERNOULLI_CLAMP)
        return PredictiveMixture(variant, P, np.broadcast_to(p, P.shape).copy())
    if variant == "learnable_gauss":
        var = models[0].noise + (link.level_var if link.mode == "trainable-gaussian" else 0.0)
        return PredictiveMixture(variant, P, np.broadcast_to(link.levels, P.shape).copy(),
                                 np.broadcast_to(var, P.shape).copy())
    raise ValueError(f"unknown objective variant {variant!r}")


def _marg(model, X):
    fw = SVGPForward(model, X)
    return fw.mean, fw.var
