"""Gaussian special functions, truncated moments and small dense linear algebra.

Everything here is a pure function of its inputs. Scalar functions accept
numpy arrays as well and broadcast elementwise.
"""

import logging
import math

import numpy as np
from scipy import linalg
from scipy.special import erfc

from .errors import DimensionError, DomainError, NotPositiveDefiniteError

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
LOG_2PI = math.log(2.0 * math.pi)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Relative jitter escalations tried by ``cholesky_jitter``: base * 10**t.
JITTER_STEPS = 7


def _as_float(x):
    arr = np.asarray(x, dtype=np.float64)
    return arr.item() if arr.ndim == 0 else arr


def std_normal_cdf(x):
    """Standard normal CDF via the complementary error function.

    ``0.5 * erfc(-x / sqrt(2))`` is accurate in the left tail; the right tail
    saturates to 1 at the usual rate, so the absolute error stays at the
    level of double rounding everywhere.
    """
    x = np.asarray(x, dtype=np.float64)
    return _as_float(0.5 * erfc(-x / SQRT2))


def std_normal_sf(x):
    """Upper tail ``1 - Phi(x)``, computed without cancellation."""
    x = np.asarray(x, dtype=np.float64)
    return _as_float(0.5 * erfc(x / SQRT2))


def std_normal_pdf(x):
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(over="ignore"):
        out = INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return _as_float(out)


def _check_sigma(sigma):
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(~(sigma > 0)):
        raise DomainError("sigma must be strictly positive")
    return sigma


def _standardize(mu, sigma, a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.any(a > b):
        raise DomainError("interval requires a <= b")
    with np.errstate(invalid="ignore"):
        ta = (a - mu) / sigma
        tb = (b - mu) / sigma
    return ta, tb


def _interval_mass(ta, tb):
    """``Phi(tb) - Phi(ta)`` for standardized bounds, tail-stable."""
    upper = ta > 0
    # In the right tail both upper-tail masses are small and well resolved.
    right = std_normal_sf(np.where(upper, ta, 0.0)) - std_normal_sf(np.where(upper, tb, 0.0))
    left = std_normal_cdf(np.where(upper, 0.0, tb)) - std_normal_cdf(np.where(upper, 0.0, ta))
    return np.where(upper, right, left)


def gauss_interval_prob(mu, sigma, a, b):
    """Probability that ``N(mu, sigma**2)`` falls in ``[a, b)``.

    Either bound may be infinite. Intervals entirely above the mean are
    evaluated from upper-tail masses so that narrow far-tail intervals keep
    their relative precision.
    """
    sigma = _check_sigma(sigma)
    ta, tb = _standardize(mu, sigma, a, b)
    return _as_float(np.clip(_interval_mass(ta, tb), 0.0, 1.0))


def _pdf_at(t):
    # pdf(+-inf) = 0 and t * pdf(t) -> 0 at the infinite ends
    return np.where(np.isfinite(t), INV_SQRT_2PI * np.exp(-0.5 * np.square(np.where(np.isfinite(t), t, 0.0))), 0.0)


def truncated_normal_partial_mean(mu, sigma, a, b):
    """Partial first moment ``int_a^b x N(x | mu, sigma**2) dx``.

    Closed form ``mu * (Phi(tb) - Phi(ta)) + sigma * (pdf(ta) - pdf(tb))`` on
    the standardized bounds ``ta = (a - mu) / sigma``, ``tb = (b - mu) / sigma``.
    """
    sigma = _check_sigma(sigma)
    ta, tb = _standardize(mu, sigma, a, b)
    mass = _interval_mass(ta, tb)
    return _as_float(mu * mass + sigma * (_pdf_at(ta) - _pdf_at(tb)))


def cholesky_jitter(A, base_jitter=1e-6, try_zero=True):
    """Cholesky factor of ``A + eps * I`` with escalating jitter.

    The jitter ladder is ``0`` (only if ``try_zero``) followed by
    ``base_jitter * mean(diag(A)) * 10**t`` for ``t = 0, ..., 6``.

    Returns
    -------
    L : ndarray
        Lower-triangular factor with ``L @ L.T == A + eps * I``.
    eps : float
        The jitter that was added.

    Raises
    ------
    NotPositiveDefiniteError
        If every rung of the ladder fails.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    scale = float(np.mean(np.diag(A))) if n else 1.0
    if not scale > 0:
        scale = 1.0
    ladder = [0.0] if try_zero else []
    ladder += [base_jitter * scale * 10.0**t for t in range(JITTER_STEPS)]
    eye = np.eye(n)
    for i, eps in enumerate(ladder):
        try:
            L = np.linalg.cholesky(A + eps * eye)
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(L)):
            continue
        if i > (1 if try_zero else 0):
            logger.info("cholesky jitter escalated to %.3g", eps)
        return L, eps
    raise NotPositiveDefiniteError(
        f"matrix not positive definite after jitter up to {ladder[-1]:.3g}"
    )


def chol_solve(L, B):
    """Solve ``(L L^T) X = B`` given the lower Cholesky factor ``L``."""
    return linalg.cho_solve((L, True), B, check_finite=False)


def kl_mvn(q_mean, q_cov_chol, p_mean, p_cov_chol):
    """``KL(N(q_mean, Lq Lq^T) || N(p_mean, Lp Lp^T))`` in closed form."""
    q_mean = np.atleast_1d(np.asarray(q_mean, dtype=np.float64))
    p_mean = np.atleast_1d(np.asarray(p_mean, dtype=np.float64))
    Lq = np.atleast_2d(np.asarray(q_cov_chol, dtype=np.float64))
    Lp = np.atleast_2d(np.asarray(p_cov_chol, dtype=np.float64))
    m = q_mean.shape[0]
    if p_mean.shape != (m,) or Lq.shape != (m, m) or Lp.shape != (m, m):
        raise DimensionError("kl_mvn: mismatched dimensions")
    V = linalg.solve_triangular(Lp, Lq, lower=True, check_finite=False)
    w = linalg.solve_triangular(Lp, p_mean - q_mean, lower=True, check_finite=False)
    logdet_p = 2.0 * np.sum(np.log(np.diag(Lp)))
    logdet_q = 2.0 * np.sum(np.log(np.diag(Lq)))
    return 0.5 * (np.sum(V * V) + np.dot(w, w) - m + logdet_p - logdet_q)


def kl_univariate_gauss(mu_q, var_q, mu_p, var_p):
    """KL divergence between two univariate Gaussians (broadcasts)."""
    var_q = np.asarray(var_q, dtype=np.float64)
    var_p = np.asarray(var_p, dtype=np.float64)
    if np.any(~(var_q > 0)) or np.any(~(var_p > 0)):
        raise DomainError("variances must be strictly positive")
    diff = np.asarray(mu_q, dtype=np.float64) - mu_p
    return _as_float(0.5 * (np.log(var_p / var_q) + (var_q + diff * diff) / var_p - 1.0))


def log_normal_density(y, mean, var):
    """Elementwise ``log N(y | mean, var)``."""
    r = np.asarray(y, dtype=np.float64) - mean
    return -0.5 * (LOG_2PI + np.log(var) + r * r / var)
