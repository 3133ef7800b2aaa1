"""Partitions of the real line and piecewise-constant inverse-link functions.

A partition with ``K`` intervals is stored through its ``K - 1`` interior
edges; the outer intervals are half-infinite. Interval ``k`` is the half-open
set ``[lower[k], upper[k])``.
"""

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .errors import DimensionError, DomainError
from .math_core import (
    INV_SQRT_2PI,
    gauss_interval_prob,
    std_normal_cdf,
    std_normal_sf,
    truncated_normal_partial_mean,
)

MODES = ("fixed", "trainable-point", "trainable-gaussian")
TRANSFORMS = ("identity", "sigmoid")

INVERSE_LINKS = {
    "sigmoid": expit,
    "exp": np.exp,
    "identity": lambda x: np.asarray(x, dtype=np.float64),
}

# Inverse links that are not globally Lipschitz.
NON_LIPSCHITZ = {"exp"}


@dataclass(frozen=True)
class Partition:
    edges: tuple

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        if not all(math.isfinite(e) for e in edges):
            raise DomainError("interior edges must be finite")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise DomainError("interior edges must be strictly increasing")
        object.__setattr__(self, "edges", edges)

    @property
    def K(self):
        return len(self.edges) + 1

    @property
    def edge_array(self):
        return np.asarray(self.edges, dtype=np.float64)

    @property
    def lower(self):
        return np.concatenate([[-np.inf], self.edge_array])

    @property
    def upper(self):
        return np.concatenate([self.edge_array, [np.inf]])

    @property
    def reps(self):
        return representatives(self)

    def index(self, x):
        """Interval index of each ``x`` (right-continuous at edges)."""
        return np.searchsorted(self.edge_array, x, side="right")


def uniform_partition(K, lo=-3.0, hi=3.0):
    """``K - 1`` equally spaced edges, the first at ``lo`` and the last at ``hi``.

    With ``K == 2`` the single edge sits at the midpoint of ``[lo, hi]``.
    """
    if int(K) != K or K < 1:
        raise DomainError(f"K must be a positive integer, got {K}")
    if not lo < hi:
        raise DomainError("uniform_partition requires lo < hi")
    K = int(K)
    if K == 1:
        return Partition(())
    if K == 2:
        return Partition((0.5 * (lo + hi),))
    return Partition(tuple(np.linspace(lo, hi, K - 1)))


def representatives(p):
    """``x_k = u_k`` for ``k < K`` and ``x_K = l_K``; a lone interval gets 0."""
    if p.K == 1:
        return np.zeros(1)
    e = p.edge_array
    return np.concatenate([e, e[-1:]])


@dataclass
class PiecewiseLink:
    """Piecewise-constant approximation of an inverse link.

    ``raw`` holds the free level parameters; ``levels`` applies ``transform``
    to them. In ``trainable-gaussian`` mode the levels are the variational
    means of ``q(g_k)`` and ``raw_log_var`` stores ``log`` of their variances.
    """

    partition: Partition
    raw: np.ndarray
    mode: str = "fixed"
    transform: str = "identity"
    raw_log_var: np.ndarray = None
    name: str = None

    def __post_init__(self):
        self.raw = np.asarray(self.raw, dtype=np.float64).reshape(-1)
        if self.raw.shape[0] != self.partition.K:
            raise DimensionError(
                f"{self.raw.shape[0]} levels for a partition with K={self.partition.K}"
            )
        if self.mode not in MODES:
            raise ValueError(f"unknown link mode {self.mode!r}")
        if self.transform not in TRANSFORMS:
            raise ValueError(f"unknown level transform {self.transform!r}")
        if self.mode == "trainable-gaussian":
            if self.transform != "identity":
                raise ValueError("gaussian levels must use the identity transform")
            if self.raw_log_var is None:
                self.raw_log_var = np.zeros(self.partition.K)
            self.raw_log_var = np.asarray(self.raw_log_var, dtype=np.float64).reshape(-1)
            if self.raw_log_var.shape != self.raw.shape:
                raise DimensionError("raw_log_var must have one entry per interval")

    @property
    def K(self):
        return self.partition.K

    @property
    def levels(self):
        if self.transform == "sigmoid":
            return expit(self.raw)
        return self.raw

    @property
    def level_var(self):
        if self.mode != "trainable-gaussian":
            return None
        return np.exp(self.raw_log_var)

    @property
    def trainable(self):
        return self.mode != "fixed"

    def levels_grad(self):
        """Elementwise derivative of ``levels`` with respect to ``raw``."""
        if self.transform == "sigmoid":
            g = expit(self.raw)
            return g * (1.0 - g)
        return np.ones_like(self.raw)

    def log_levels(self):
        """``(log g_k, log(1 - g_k))`` computed stably for Bernoulli use."""
        if self.transform == "sigmoid":
            return -np.logaddexp(0.0, -self.raw), -np.logaddexp(0.0, self.raw)
        g = np.clip(self.levels, 1e-12, 1.0 - 1e-12)
        return np.log(g), np.log1p(-g)

    def replace(self, **changes):
        fields = dict(
            partition=self.partition,
            raw=self.raw.copy(),
            mode=self.mode,
            transform=self.transform,
            raw_log_var=None if self.raw_log_var is None else self.raw_log_var.copy(),
            name=self.name,
        )
        fields.update(changes)
        return PiecewiseLink(**fields)

    def to_dict(self):
        return {
            "edges": list(self.partition.edges),
            "raw": self.raw.tolist(),
            "mode": self.mode,
            "transform": self.transform,
            "raw_log_var": None if self.raw_log_var is None else self.raw_log_var.tolist(),
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            partition=Partition(tuple(d["edges"])),
            raw=np.asarray(d["raw"], dtype=np.float64),
            mode=d["mode"],
            transform=d["transform"],
            raw_log_var=None if d.get("raw_log_var") is None else np.asarray(d["raw_log_var"]),
            name=d.get("name"),
        )


def discretize_link(g, p, mode="fixed", transform="identity", level_var=None, name=None):
    """Piecewise link with ``g_k = g(x_k)`` at the partition representatives.

    ``g`` may be a callable or one of the names in ``INVERSE_LINKS``. When
    ``transform="sigmoid"`` the free parameters are ``logit(g_k)``.
    """
    if isinstance(g, str):
        name = name or g
        g = INVERSE_LINKS[g]
    levels = np.asarray(g(representatives(p)), dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(levels)):
        raise DomainError("inverse link is not finite at every representative")
    if transform == "sigmoid":
        if np.any((levels <= 0) | (levels >= 1)):
            raise DomainError("sigmoid-parameterized levels must lie in (0, 1)")
        raw = logit(levels)
    else:
        raw = levels
    raw_log_var = None
    if mode == "trainable-gaussian":
        lv = 1.0 if level_var is None else level_var
        raw_log_var = np.log(np.broadcast_to(np.asarray(lv, dtype=np.float64), raw.shape)).copy()
    return PiecewiseLink(p, raw, mode=mode, transform=transform, raw_log_var=raw_log_var, name=name)


def sigmoid_link(p, trainable=False):
    """Sigmoid approximation; a trainable one uses ``raw = x_k`` exactly."""
    if not trainable:
        return discretize_link("sigmoid", p)
    return PiecewiseLink(p, representatives(p).copy(), mode="trainable-point",
                         transform="sigmoid", name="sigmoid")


def eval_piecewise(link, x):
    """Evaluate the simple function at ``x``; edges belong to the right interval."""
    idx = link.partition.index(x)
    out = link.levels[idx]
    return out.item() if np.ndim(out) == 0 else out


def _moments(m):
    """Accept a GaussianMarginal, a (mean, var) pair, or arrays thereof."""
    if hasattr(m, "mean") and hasattr(m, "var") and not isinstance(m, np.ndarray):
        return np.asarray(m.mean, dtype=np.float64), np.asarray(m.var, dtype=np.float64)
    mean, var = m
    return np.asarray(mean, dtype=np.float64), np.asarray(var, dtype=np.float64)


def interval_probs_and_grads(p, mean, var):
    """Interval probabilities of ``N(mean_i, var_i)`` and their derivatives.

    Returns
    -------
    P, dP_dmean, dP_dvar : ndarray, shape (N, K)
        Rows with ``var == 0`` are point masses with zero derivatives.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    var = np.atleast_1d(np.asarray(var, dtype=np.float64))
    if np.any(var < 0):
        raise DomainError("negative marginal variance")
    n, K = mean.shape[0], p.K
    point = var == 0
    s = np.sqrt(np.where(point, 1.0, var))[:, None]
    e = p.edge_array[None, :]
    t_inner = (e - mean[:, None]) / s
    ninf = np.full((n, 1), -np.inf)
    pinf = np.full((n, 1), np.inf)
    T = np.concatenate([ninf, t_inner, pinf], axis=1)
    cdf = std_normal_cdf(T).reshape(n, K + 1)
    sf = std_normal_sf(T).reshape(n, K + 1)
    T_lo = T[:, :-1]
    right = T_lo > 0
    P = np.where(right, sf[:, :-1] - sf[:, 1:], cdf[:, 1:] - cdf[:, :-1])
    P = np.maximum(P, 0.0)

    fin = np.isfinite(T)
    Tf = np.where(fin, T, 0.0)
    phi = np.where(fin, INV_SQRT_2PI * np.exp(-0.5 * Tf * Tf), 0.0)
    tphi = Tf * phi
    dP_dmean = (phi[:, :-1] - phi[:, 1:]) / s
    dP_dsd = (tphi[:, :-1] - tphi[:, 1:]) / s
    dP_dvar = dP_dsd / (2.0 * s)

    if np.any(point):
        idx = p.index(mean[point])
        onehot = np.zeros((int(point.sum()), K))
        onehot[np.arange(idx.shape[0]), idx] = 1.0
        P[point] = onehot
        dP_dmean[point] = 0.0
        dP_dvar[point] = 0.0
    return P, dP_dmean, dP_dvar


def interval_probs(p, m):
    """Probabilities of each interval under a Gaussian marginal.

    ``m`` is a GaussianMarginal (or ``(mean, var)``); array-valued moments
    give an ``(N, K)`` matrix, scalar ones a length-``K`` vector.
    """
    mean, var = _moments(m)
    scalar = mean.ndim == 0
    P, _, _ = interval_probs_and_grads(p, mean, var)
    return P[0] if scalar else P


def lipschitz_mse_bound(p, lam, mu, sigma, link=None, allow_non_lipschitz=False):
    """Upper bound on ``E[(g(X) - g_hat(X))**2]`` for an ``lam``-Lipschitz ``g``.

    ``X ~ N(mu, sigma**2)`` and the levels are ``g(x_k)`` at the partition
    representatives. The bound equals ``lam**2 * E[(X - x_k(X))**2]``.
    ``link`` is an optional name for the true inverse link; passing a name
    that is not globally Lipschitz (``"exp"``) raises unless
    ``allow_non_lipschitz`` is set.
    """
    if link in NON_LIPSCHITZ and not allow_non_lipschitz:
        raise DomainError(f"the {link!r} inverse link is not globally Lipschitz")
    if not lam > 0:
        raise DomainError("Lipschitz constant must be positive")
    if not sigma > 0:
        raise DomainError("sigma must be strictly positive")
    x = representatives(p)
    lo, up = p.lower, p.upper
    mass = gauss_interval_prob(mu, sigma, lo, up)
    partial = truncated_normal_partial_mean(mu, sigma, lo, up)
    inner = np.sum(x * (partial - 0.5 * x * mass))
    bound = lam**2 * (mu * mu + sigma * sigma - 2.0 * inner)
    if bound < 0:
        if bound < -1e-12 * max(1.0, lam**2 * (mu * mu + sigma * sigma)):
            raise ArithmeticError(f"negative bound {bound!r}")
        bound = 0.0
    return float(bound)


def exp_link_mse(p, mu, sigma):
    """Exact ``E[(exp(X) - exp_hat(X))**2]`` for ``X ~ N(mu, sigma**2)``.

    Levels are ``exp(x_k)``. Each interval contributes
    ``e^{2mu+2sigma^2} D(-2sigma) - 2 c_k e^{mu+sigma^2/2} D(-sigma) + c_k^2 D(0)``,
    where ``D(shift)`` is the standard normal mass between the standardized
    bounds moved by ``shift``.
    """
    if not sigma > 0:
        raise DomainError("sigma must be strictly positive")
    lo = (p.lower - mu) / sigma
    up = (p.upper - mu) / sigma
    c = np.exp(representatives(p))

    def mass(shift):
        return gauss_interval_prob(0.0, 1.0, lo + shift, up + shift)

    terms = (
        np.exp(2.0 * mu + 2.0 * sigma**2) * mass(-2.0 * sigma)
        - 2.0 * c * np.exp(mu + 0.5 * sigma**2) * mass(-sigma)
        + c * c * mass(0.0)
    )
    return float(max(np.sum(np.maximum(terms, 0.0)), 0.0))


LINK_CSV_HEADER = ["k", "lower", "upper", "rep", "level"]


def _fmt(x):
    if x == np.inf:
        return "inf"
    if x == -np.inf:
        return "-inf"
    return repr(float(x))


def write_link_csv(link, fh):
    """Write one row per interval: ``k,lower,upper,rep,level[,level_sd]``."""
    p = link.partition
    header = list(LINK_CSV_HEADER)
    sd = None
    if link.mode == "trainable-gaussian":
        header.append("level_sd")
        sd = np.sqrt(link.level_var)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for k, (lo, up, x, g) in enumerate(zip(p.lower, p.upper, p.reps, link.levels), start=1):
        row = [k, _fmt(lo), _fmt(up), _fmt(x), _fmt(g)]
        if sd is not None:
            row.append(_fmt(sd[k - 1]))
        w.writerow(row)


def link_csv(link):
    buf = io.StringIO()
    write_link_csv(link, buf)
    return buf.getvalue()


def read_link_csv(fh):
    """Parse a link CSV back into ``dict`` columns of floats."""
    rows = list(csv.DictReader(fh))
    return {key: np.array([float(r[key]) for r in rows]) for key in rows[0].keys()}
