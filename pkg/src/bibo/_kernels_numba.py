"""Numba backend for the GP hot kernels.

Loop-style implementations compiled with @njit(cache=True). The GP fit
re-evaluates the marginal likelihood thousands of times per study, so these
run 10-50x faster than the vectorized fallback at study sizes (n <= ~50).
Contract matches `_kernels_numpy` exactly; see `kernels` for dispatch.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True)
def matern52(X1, X2, ls, sig):
    m, d = X1.shape
    n = X2.shape[0]
    K = np.empty((m, n))
    for i in range(m):
        for j in range(n):
            r2 = 0.0
            for k in range(d):
                t = (X1[i, k] - X2[j, k]) / ls[k]
                r2 += t * t
            r = math.sqrt(5.0 * r2)
            K[i, j] = sig * (1.0 + r + r * r / 3.0) * math.exp(-r)
    return K


@njit(cache=True)
def factorize(X, ls, sig, diag):
    n = X.shape[0]
    K = matern52(X, X, ls, sig)
    for i in range(n):
        K[i, i] += diag
    # in-place lower Cholesky; bail out on a non-positive pivot
    L = K
    for j in range(n):
        s = L[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if s <= 0.0:
            return L, False
        L[j, j] = math.sqrt(s)
        for i in range(j + 1, n):
            t = L[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            L[i, j] = t / L[j, j]
    for i in range(n):
        for j in range(i + 1, n):
            L[i, j] = 0.0
    return L, True


@njit(cache=True)
def lml(X, y, ls, sig, diag):
    n = X.shape[0]
    L, ok = factorize(X, ls, sig, diag)
    if not ok:
        return -math.inf
    # forward solve L a = y; quad form and log-determinant in one pass
    a = np.empty(n)
    logdet = 0.0
    for i in range(n):
        s = y[i]
        for k in range(i):
            s -= L[i, k] * a[k]
        a[i] = s / L[i, i]
        logdet += math.log(L[i, i])
    quad = 0.0
    for i in range(n):
        quad += a[i] * a[i]
    return -0.5 * quad - logdet - 0.5 * n * LOG_2PI


@njit(cache=True)
def solve_chol(L, y):
    n = L.shape[0]
    z = np.empty(n)
    for i in range(n):
        s = y[i]
        for k in range(i):
            s -= L[i, k] * z[k]
        z[i] = s / L[i, i]
    a = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = z[i]
        for k in range(i + 1, n):
            s -= L[k, i] * a[k]
        a[i] = s / L[i, i]
    return a


@njit(cache=True)
def cross_predict(L, alpha, Xtrain, Xq, ls, sig):
    m = Xq.shape[0]
    n = Xtrain.shape[0]
    d = Xtrain.shape[1]
    mean = np.empty(m)
    var = np.empty(m)
    w = np.empty(n)
    for i in range(m):
        mu = 0.0
        for j in range(n):
            r2 = 0.0
            for k in range(d):
                t = (Xq[i, k] - Xtrain[j, k]) / ls[k]
                r2 += t * t
            r = math.sqrt(5.0 * r2)
            kj = sig * (1.0 + r + r * r / 3.0) * math.exp(-r)
            mu += kj * alpha[j]
            w[j] = kj
        # in-place forward solve L w = kstar
        ss = 0.0
        for j in range(n):
            s = w[j]
            for k in range(j):
                s -= L[j, k] * w[k]
            w[j] = s / L[j, j]
            ss += w[j] * w[j]
        mean[i] = mu
        var[i] = sig - ss
    return mean, var
