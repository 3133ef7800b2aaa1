"""Sparse variational GP with inducing points.

The variational distribution over inducing values is ``N(a, L L^T)``. Its
marginal at inputs ``X`` has mean ``Lam a`` and variance
``k(x, x) - [Lam (K_MM - S) Lam^T]_ii`` with ``Lam = K_XM K_MM^{-1}``.
All solves go through the Cholesky factor of the (jittered) ``K_MM``.
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DimensionError, DomainError
from .kernels import KernelParams, as_inputs, cross_gram, cross_gram_vjp, gram
from .math_core import chol_solve, cholesky_jitter, kl_mvn

logger = logging.getLogger(__name__)

# Relative K_MM jitter; smaller values leave K_MM^-1 so stiff that Adam stalls
# when inducing points nearly coincide.
BASE_JITTER = 1e-4
CHECKPOINT_FORMAT = "piecewise-svgp-checkpoint"
FORMULA_VARIANT = "standard"


@dataclass
class GaussianMarginal:
    mean: float
    var: float

    def __post_init__(self):
        if self.var < -1e-10:
            raise DomainError(f"marginal variance {self.var} is negative")
        self.var = max(float(self.var), 0.0)
        self.mean = float(self.mean)

    @property
    def sd(self):
        return self.var**0.5


@dataclass
class VariationalDist:
    """``q(f_M) = N(a, L L^T)``; ``L_raw`` keeps the log of the diagonal of ``L``."""

    a: np.ndarray
    L_raw: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64).reshape(-1)
        self.L_raw = np.tril(np.asarray(self.L_raw, dtype=np.float64))
        M = self.a.shape[0]
        if self.L_raw.shape != (M, M):
            raise DimensionError(f"L_raw must be {M}x{M}, got {self.L_raw.shape}")

    @classmethod
    def from_cholesky(cls, a, L):
        L = np.tril(np.asarray(L, dtype=np.float64))
        d = np.diag(L)
        if np.any(d <= 0):
            raise DomainError("Cholesky factor needs a strictly positive diagonal")
        raw = L.copy()
        np.fill_diagonal(raw, np.log(d))
        return cls(a, raw)

    @classmethod
    def initial(cls, M, scale=0.1):
        return cls(np.zeros(M), np.diag(np.full(M, np.log(scale))))

    @property
    def M(self):
        return self.a.shape[0]

    @property
    def L(self):
        L = np.tril(self.L_raw, -1)
        L[np.diag_indices_from(L)] = np.exp(np.diag(self.L_raw))
        return L

    @property
    def S(self):
        L = self.L
        return L @ L.T


@dataclass
class SVGPModel:
    Z: np.ndarray
    vdist: VariationalDist
    kernel: KernelParams = field(default_factory=KernelParams)
    log_noise: float = None
    base_jitter: float = BASE_JITTER

    def __post_init__(self):
        self.Z = as_inputs(self.Z)
        if self.Z.shape[0] != self.vdist.M:
            raise DimensionError("number of inducing points and variational dimension differ")

    @property
    def M(self):
        return self.Z.shape[0]

    @property
    def noise(self):
        return None if self.log_noise is None else float(np.exp(self.log_noise))

    def copy(self):
        return SVGPModel(
            self.Z.copy(),
            VariationalDist(self.vdist.a.copy(), self.vdist.L_raw.copy()),
            KernelParams(self.kernel.log_v, self.kernel.log_s),
            self.log_noise,
            self.base_jitter,
        )


def init_model(X, M=10, rng=None, with_noise=False, log_noise=0.0):
    """Model with inducing locations sampled from the rows of ``X`` without replacement."""
    X = as_inputs(X)
    rng = np.random.default_rng(rng)
    if M > X.shape[0]:
        logger.warning("M=%d exceeds the %d available rows; using M=%d", M, X.shape[0], X.shape[0])
        M = X.shape[0]
    idx = rng.choice(X.shape[0], size=M, replace=False)
    return SVGPModel(
        X[np.sort(idx)].copy(),
        VariationalDist.initial(M),
        KernelParams(0.0, 0.0),
        log_noise if with_noise else None,
    )


def _prior_factor(model):
    Kbase = gram(model.Z, model.kernel)
    Lk, eps = cholesky_jitter(Kbase, model.base_jitter, try_zero=False)
    return Kbase, Lk, eps


def prior_at_inducing(model):
    """Zero mean and jittered ``K_MM``; also returns the jitter that was used."""
    Kbase, Lk, eps = _prior_factor(model)
    return np.zeros(model.M), Kbase + eps * np.eye(model.M), eps


class SVGPForward:
    """Marginal moments and KL of one model at fixed inputs, with a reverse pass.

    ``backward(g_mean, g_var, g_kl)`` maps cotangents of ``mean`` (N),
    ``var`` (N) and ``kl`` (scalar) to gradients with respect to the free
    parameters ``log_v``, ``log_s``, ``Z``, ``a`` and ``L_raw``.
    """

    def __init__(self, model, X):
        self.model = model
        self.X = X = as_inputs(X)
        if X.shape[1] != model.Z.shape[1]:
            raise DimensionError("input dimension differs from inducing dimension")
        kp = model.kernel
        self.v = kp.v
        self.Kbase, self.Lk, self.jitter = _prior_factor(model)
        self.Kmm = self.Kbase + self.jitter * np.eye(model.M)
        self.Kxm = cross_gram(X, model.Z, kp)
        a = model.vdist.a
        self.L = L = model.vdist.L
        self.alpha = chol_solve(self.Lk, a)
        self.Lam = chol_solve(self.Lk, self.Kxm.T).T
        self.AL = chol_solve(self.Lk, L)
        self.W = self.Lam @ L
        self.mean = self.Kxm @ self.alpha
        q1 = np.sum(self.Lam * self.Kxm, axis=1)
        q2 = np.sum(self.W * self.W, axis=1)
        self.var_raw = self.v - q1 + q2
        if np.any(self.var_raw < -1e-8 * max(self.v, 1.0)):
            logger.debug("negative marginal variance %.3g clamped", self.var_raw.min())
        self.var = np.maximum(self.var_raw, 0.0)

        M = model.M
        V = linalg.solve_triangular(self.Lk, L, lower=True, check_finite=False)
        self.kl = 0.5 * (
            np.sum(V * V)
            + a @ self.alpha
            - M
            + 2.0 * np.sum(np.log(np.diag(self.Lk)))
            - 2.0 * np.sum(model.vdist.L_raw.diagonal())
        )

    def _A_sandwich(self, G):
        """``A G A`` with ``A = K_MM^{-1}``."""
        return chol_solve(self.Lk, chol_solve(self.Lk, G).T).T

    def backward(self, g_mean, g_var, g_kl=-1.0):
        m = self.model
        X, Z, Kxm, Lam, W, L = self.X, m.Z, self.Kxm, self.Lam, self.W, self.L
        a, alpha = m.vdist.a, self.alpha
        gm = np.asarray(g_mean, dtype=np.float64)
        gv = np.where(self.var_raw > 0, np.asarray(g_var, dtype=np.float64), 0.0)

        dW = 2.0 * gv[:, None] * W
        G_Kxm = np.outer(gm, alpha) - 2.0 * gv[:, None] * Lam + dW @ self.AL.T
        d_alpha = Kxm.T @ gm
        G_A = -(Kxm.T * gv) @ Kxm + Kxm.T @ dW @ L.T + np.outer(d_alpha, a)
        G_L = Lam.T @ dW
        g_a = chol_solve(self.Lk, d_alpha) + g_kl * alpha

        Linv_T = linalg.solve_triangular(L, np.eye(m.M), lower=True, check_finite=False).T
        G_L = G_L + g_kl * (self.AL - Linv_T)
        ASA = self._A_sandwich(L @ L.T)
        A = chol_solve(self.Lk, np.eye(m.M))
        G_Kmm = -self._A_sandwich(G_A) + g_kl * 0.5 * (A - ASA - np.outer(alpha, alpha))
        G_Kmm = 0.5 * (G_Kmm + G_Kmm.T)

        dlv1, dls1, _, dZ1 = cross_gram_vjp(X, Z, m.kernel, Kxm, G_Kxm)
        dlv2, dls2, dZa, dZb = cross_gram_vjp(Z, Z, m.kernel, self.Kbase, G_Kmm)
        # the jitter is proportional to v, so it follows log_v as well
        d_log_v = dlv1 + dlv2 + self.jitter * np.trace(G_Kmm) + self.v * np.sum(gv)
        d_log_s = dls1 + dls2

        g_L_raw = np.tril(G_L)
        g_L_raw[np.diag_indices_from(g_L_raw)] *= np.diag(L)
        return {
            "log_v": float(d_log_v),
            "log_s": float(d_log_s),
            "Z": dZ1 + dZa + dZb,
            "a": g_a,
            "L_raw": g_L_raw,
        }


def marginal_moments(model, X):
    fw = SVGPForward(model, X)
    return fw.mean, fw.var


def marginal_q(model, X):
    """Per-row variational marginals ``N(mu_i, Sigma_ii)`` at ``X``."""
    mean, var = marginal_moments(model, X)
    return [GaussianMarginal(mu, v) for mu, v in zip(mean, var)]


def dense_marginal_oracle(model, X):
    """Full joint ``N(Lam a, K_XX - Lam (K_MM - S) Lam^T)`` via an explicit inverse.

    Test pathway only; training never forms the full covariance.
    """
    X = as_inputs(X)
    _, Kmm, _ = prior_at_inducing(model)
    Ainv = np.linalg.inv(Kmm)
    Kxm = cross_gram(X, model.Z, model.kernel)
    Lam = Kxm @ Ainv
    cov = gram(X, model.kernel) - Lam @ (Kmm - model.vdist.S) @ Lam.T
    return Lam @ model.vdist.a, cov


def kl_term(model):
    """``KL(q(f_M) || p(f_M))``."""
    _, Lk, _ = _prior_factor(model)
    return float(kl_mvn(model.vdist.a, model.vdist.L, np.zeros(model.M), Lk))


# --- checkpoints -----------------------------------------------------------


def _tril_rows(A):
    return A[np.tril_indices(A.shape[0])].tolist()


def _from_tril_rows(vals, M):
    A = np.zeros((M, M))
    A[np.tril_indices(M)] = vals
    return A


def model_to_dict(model):
    M, d = model.Z.shape
    return {
        "kernel": {"log_v": float(model.kernel.log_v), "log_s": float(model.kernel.log_s)},
        "inducing": {"shape": [M, d], "Z": model.Z.reshape(-1).tolist()},
        "vdist": {
            "a": model.vdist.a.tolist(),
            "L_raw": _tril_rows(model.vdist.L_raw),
            "L": _tril_rows(model.vdist.L),
        },
        "noise": None if model.log_noise is None else {"log_var": float(model.log_noise)},
        "base_jitter": model.base_jitter,
    }


def model_from_dict(d):
    M, dim = d["inducing"]["shape"]
    Z = np.asarray(d["inducing"]["Z"], dtype=np.float64).reshape(M, dim)
    vd = VariationalDist(np.asarray(d["vdist"]["a"]), _from_tril_rows(d["vdist"]["L_raw"], M))
    noise = d.get("noise")
    return SVGPModel(
        Z,
        vd,
        KernelParams(d["kernel"]["log_v"], d["kernel"]["log_s"]),
        None if noise is None else noise["log_var"],
        d.get("base_jitter", BASE_JITTER),
    )


def checkpoint_dict(model, link=None, variance_model=None, task=None, meta=None, extra=None):
    """Self-describing checkpoint document.

    ``model`` fills the top-level ``kernel``/``inducing``/``vdist``/``noise``
    fields; a heteroscedastic fit stores its second GP under ``variance_model``.
    """
    doc = {"format": CHECKPOINT_FORMAT, "version": 1, "formula_variant": FORMULA_VARIANT, "task": task}
    doc.update(model_to_dict(model))
    doc["variance_model"] = None if variance_model is None else model_to_dict(variance_model)
    doc["link"] = None if link is None else link.to_dict()
    meta = dict(meta or {})
    meta.setdefault("jitter_used", prior_at_inducing(model)[2])
    doc["meta"] = meta
    if extra:
        doc.update(extra)
    return doc


def save_checkpoint(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a checkpoint")
    return doc
