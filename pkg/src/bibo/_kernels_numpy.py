"""Pure-numpy backend for the GP hot kernels (fallback when numba is off/absent).

Same contract as `_kernels_numba`; see `kernels` for the dispatch rules.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg

LOG_2PI = math.log(2.0 * math.pi)


def matern52(X1: np.ndarray, X2: np.ndarray, ls: np.ndarray, sig: float) -> np.ndarray:
    """Matern 5/2 cross-covariance with per-dimension lengthscales."""
    Z1 = X1 / ls
    Z2 = X2 / ls
    d2 = (
        np.sum(Z1 * Z1, axis=1)[:, None]
        + np.sum(Z2 * Z2, axis=1)[None, :]
        - 2.0 * (Z1 @ Z2.T)
    )
    np.maximum(d2, 0.0, out=d2)  # clamp expansion round-off
    r = np.sqrt(5.0 * d2)
    return sig * (1.0 + r + r * r / 3.0) * np.exp(-r)


def factorize(
    X: np.ndarray, ls: np.ndarray, sig: float, diag: float
) -> tuple[np.ndarray, bool]:
    """Lower Cholesky factor of K + diag*I; L is undefined when ok is False."""
    K = matern52(X, X, ls, sig)
    K[np.diag_indices_from(K)] += diag
    try:
        return np.linalg.cholesky(K), True
    except np.linalg.LinAlgError:
        return np.zeros_like(K), False


def lml(X: np.ndarray, y: np.ndarray, ls: np.ndarray, sig: float, diag: float) -> float:
    """Gaussian log marginal likelihood of y under the kernel; -inf if not PSD."""
    L, ok = factorize(X, ls, sig, diag)
    if not ok:
        return -math.inf
    a = scipy.linalg.solve_triangular(L, y, lower=True)
    return (
        -0.5 * float(a @ a)
        - float(np.sum(np.log(np.diag(L))))
        - 0.5 * len(y) * LOG_2PI
    )


def solve_chol(L: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Solve (L L^T) a = y."""
    return scipy.linalg.cho_solve((L, True), y)


def cross_predict(
    L: np.ndarray,
    alpha: np.ndarray,
    Xtrain: np.ndarray,
    Xq: np.ndarray,
    ls: np.ndarray,
    sig: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and (unclamped) latent variance at query points."""
    Kstar = matern52(Xq, Xtrain, ls, sig)
    mean = Kstar @ alpha
    W = scipy.linalg.solve_triangular(L, Kstar.T, lower=True)
    var = sig - np.einsum("ij,ij->j", W, W)
    return mean, var
