"""Isotropic squared-exponential kernel and Gram matrices."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


@dataclass
class KernelParams:
    """Log signal variance and log lengthscale of the SE kernel."""

    log_v: float = 0.0
    log_s: float = 0.0

    @property
    def v(self):
        return float(np.exp(self.log_v))

    @property
    def s(self):
        return float(np.exp(self.log_s))


def as_inputs(X):
    """Coerce to a finite 2-D float array (a single vector becomes one column)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DimensionError(f"inputs must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("inputs contain non-finite entries")
    return X


def se_kernel(x, x2, params):
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    x2 = np.atleast_1d(np.asarray(x2, dtype=np.float64))
    if x.shape != x2.shape:
        raise DimensionError("se_kernel: points differ in dimension")
    r2 = float(np.sum((x - x2) ** 2))
    return params.v * float(np.exp(-0.5 * r2 / params.s**2))


def cross_gram(X, Z, params):
    """N x M matrix ``k(x_i, z_j)``."""
    X = as_inputs(X)
    Z = as_inputs(Z)
    if X.shape[1] != Z.shape[1]:
        raise DimensionError(
            f"cross_gram: input dimension {X.shape[1]} vs {Z.shape[1]}"
        )
    # Exact differences rather than the expanded form keep the diagonal at v.
    diff = X[:, None, :] - Z[None, :, :]
    r2 = np.sum(diff * diff, axis=-1)
    return params.v * np.exp(-0.5 * r2 / params.s**2)


def gram(X, params):
    K = cross_gram(X, X, params)
    return 0.5 * (K + K.T)


def cross_gram_vjp(X, Z, params, K, G):
    """Pull a cotangent ``G = dF/dK`` for ``K = cross_gram(X, Z)`` back to parameters.

    Returns ``(d_log_v, d_log_s, d_X, d_Z)``.
    """
    s2 = params.s**2
    diff = X[:, None, :] - Z[None, :, :]
    r2 = np.sum(diff * diff, axis=-1)
    GK = G * K
    d_log_v = np.sum(GK)
    d_log_s = np.sum(GK * r2) / s2
    # dK_ij / dz_j = K_ij (x_i - z_j) / s^2
    d_Z = np.einsum("ij,ijd->jd", GK, diff) / s2
    d_X = -np.einsum("ij,ijd->id", GK, diff) / s2
    return d_log_v, d_log_s, d_X, d_Z
