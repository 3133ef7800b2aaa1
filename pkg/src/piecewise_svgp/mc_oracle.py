"""Seeded Monte-Carlo estimators used as ground truth for closed-form expectations.

Samples are drawn by reparameterization, ``f = mean + sd * eps`` with
``eps ~ N(0, 1)`` from numpy's PCG64 generator.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .math_core import LOG_2PI, log_normal_density
from .piecewise import eval_piecewise
from .svgp import SVGPForward

RNG_NAME = "PCG64"
MIN_SAMPLES = 100
MAX_NONFINITE_FRACTION = 1e-3
CHUNK = 20000


@dataclass
class McEstimate:
    mean: float
    std_error: float
    n_samples: int
    seed: int
    rng: str = RNG_NAME

    def z_score(self, value):
        """Signed distance of ``value`` from the estimate in standard errors."""
        if self.std_error == 0:
            return 0.0 if value == self.mean else np.inf * np.sign(value - self.mean)
        return (value - self.mean) / self.std_error

    def agrees(self, value, n_se=4.0):
        return abs(value - self.mean) <= n_se * self.std_error


def summarize(samples, seed):
    """McEstimate from per-draw values; non-finite draws beyond 0.1% are an error."""
    samples = np.asarray(samples, dtype=np.float64)
    finite = np.isfinite(samples)
    bad = samples.size - int(finite.sum())
    if bad > MAX_NONFINITE_FRACTION * samples.size:
        raise DomainError(f"{bad} of {samples.size} draws are non-finite")
    x = samples[finite]
    n = x.size
    if n < 2:
        raise DomainError("at least two finite draws are needed")
    return McEstimate(float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(n)), n, seed)


def _check_n(n):
    if n < MIN_SAMPLES:
        raise DomainError(f"n must be at least {MIN_SAMPLES}")


def _moments(m):
    return float(m.mean), float(max(m.var, 0.0))


def mc_expectation(h, marginals, links=None, n=100000, seed=0):
    """Estimate ``E[h(f_1, ..., f_C)]`` for independent Gaussian marginals.

    ``h`` receives ``C`` arrays of draws. When ``links`` is given, each draw
    is passed through the matching piecewise link before ``h``.
    """
    _check_n(n)
    if not isinstance(marginals, (list, tuple)):
        marginals = [marginals]
    if links is not None and not isinstance(links, (list, tuple)):
        links = [links]
    if not 1 <= len(marginals) <= 3:
        raise DomainError("between one and three marginals are supported")
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((len(marginals), n))
    draws = []
    for c, m in enumerate(marginals):
        mu, var = _moments(m)
        f = mu + np.sqrt(var) * eps[c]
        if links is not None:
            f = eval_piecewise(links[c], f)
        draws.append(f)
    with np.errstate(all="ignore"):
        vals = np.broadcast_to(np.asarray(h(*draws), dtype=np.float64), (n,))
    return summarize(vals, seed)


def mc_link_mse(true_g, link, mu, sigma, n=1000000, seed=0):
    """Estimate ``E[(g(X) - g_hat(X))**2]`` for ``X ~ N(mu, sigma**2)``."""
    _check_n(n)
    rng = np.random.default_rng(seed)
    x = mu + sigma * rng.standard_normal(n)
    with np.errstate(all="ignore"):
        err = np.asarray(true_g(x), dtype=np.float64) - eval_piecewise(link, x)
    return summarize(err * err, seed)


def _draw_rows(rng, mean, var, n):
    return mean[None, :] + np.sqrt(np.maximum(var, 0.0))[None, :] * rng.standard_normal((n, mean.size))


def mc_objective_expectation(problem, n=200000, seed=0, chunk=CHUNK):
    """MC estimate of the summed expected log-likelihood of a :class:`Problem`.

    Each draw samples every row's latent values from the variational
    marginals (and the levels from ``q(g_k)`` for Gaussian levels), applies
    the piecewise link, and sums the row log-likelihoods.
    """
    _check_n(n)
    rng = np.random.default_rng(seed)
    v, X, y, link = problem.variant, problem.X, np.asarray(problem.y, float), problem.link
    fws = [SVGPForward(m, X) for m in problem.models]
    totals = []
    done = 0
    while done < n:
        b = min(chunk, n - done)
        f = _draw_rows(rng, fws[0].mean, fws[0].var, b)
        if v == "bernoulli":
            g = np.clip(link.levels, 1e-12, 1 - 1e-12)
            idx = link.partition.index(f)
            ll = np.where(y == 1, np.log(g)[idx], np.log1p(-g)[idx])
        elif v == "hetero_gauss":
            fs = _draw_rows(rng, fws[1].mean, fws[1].var, b)
            idx = link.partition.index(fs)
            g = link.levels
            ll = -0.5 * (LOG_2PI + np.log(g)[idx] + (y - f) ** 2 / g[idx])
        elif v == "learnable_gauss":
            idx = link.partition.index(f)
            if link.mode == "trainable-gaussian":
                levels = link.levels + np.sqrt(link.level_var) * rng.standard_normal((b, link.K))
                mean = np.take_along_axis(levels, idx, axis=1)
            else:
                mean = link.levels[idx]
            ll = log_normal_density(y, mean, problem.models[0].noise)
        elif v == "gauss":
            ll = log_normal_density(y, f, problem.models[0].noise)
        else:
            raise ValueError(v)
        totals.append(np.sum(ll, axis=1))
        done += b
    return summarize(np.concatenate(totals), seed)


def mc_predictive_log_density(problem, Xstar, ystar, n=200000, seed=0):
    """Per-row MC estimates of ``log E_q[p(y* | g_hat(f*))]`` (log of the mean density)."""
    _check_n(n)
    rng = np.random.default_rng(seed)
    link, v = problem.link, problem.variant
    fws = [SVGPForward(m, Xstar) for m in problem.models]
    ystar = np.asarray(ystar, float)
    f = _draw_rows(rng, fws[0].mean, fws[0].var, n)
    if v == "bernoulli":
        g = eval_piecewise(link, f)
        dens = np.where(ystar == 1, g, 1 - g)
    elif v == "learnable_gauss":
        idx = link.partition.index(f)
        if link.mode == "trainable-gaussian":
            levels = link.levels + np.sqrt(link.level_var) * rng.standard_normal((n, link.K))
            mean = np.take_along_axis(levels, idx, axis=1)
        else:
            mean = link.levels[idx]
        dens = np.exp(log_normal_density(ystar, mean, problem.models[0].noise))
    elif v == "hetero_gauss":
        fs = _draw_rows(rng, fws[1].mean, fws[1].var, n)
        dens = np.exp(log_normal_density(ystar, f, eval_piecewise(link, fs)))
    else:
        raise ValueError(v)
    m = dens.mean(axis=0)
    se = dens.std(axis=0, ddof=1) / np.sqrt(n)
    return m, se
