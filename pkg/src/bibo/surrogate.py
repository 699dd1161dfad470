"""Gaussian process regression over encoded configurations.

Matern 5/2 kernel with per-dimension lengthscales. Outputs are standardized
to zero mean and unit variance before fitting; kernel hyperparameters are
chosen by maximizing the exact log marginal likelihood with a multi-start
bounded Nelder-Mead search over log-parameters. All heavy numerics go
through the `kernels` backend (numba by default, numpy fallback).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from bibo import kernels

logger = logging.getLogger(__name__)

# log-space fit bounds; chosen to prevent degenerate fits on tiny datasets
_LOG_LS_LOW, _LOG_LS_HIGH = math.log(1e-2), math.log(10.0)
_LOG_SIG_LOW, _LOG_SIG_HIGH = math.log(1e-2), math.log(1e2)
_LOG_NOISE_LOW, _LOG_NOISE_HIGH = math.log(1e-8), math.log(1.0)

_N_STARTS = 8
_MAX_ITER = 200

_JITTER_FACTOR = 1e-10  # initial jitter = 1e-10 * trace(K)/n
_JITTER_CAP = 1e-4
_PENALTY = 1e18  # stands in for -inf LML inside the simplex search


class NumericalFailure(RuntimeError):
    """Kernel matrix stayed non-positive-definite after jitter escalation."""


@dataclass(frozen=True)
class KernelParams:
    """Matern 5/2 hyperparameters: per-dimension lengthscales plus variances."""

    lengthscales: np.ndarray
    signal_variance: float
    noise_variance: float

    def __post_init__(self) -> None:
        ls = np.asarray(self.lengthscales, dtype=float)
        object.__setattr__(self, "lengthscales", ls)
        if ls.ndim != 1 or not np.all(np.isfinite(ls)) or np.any(ls <= 0):
            raise ValueError("lengthscales must be a 1-D array of positive reals")
        if not (math.isfinite(self.signal_variance) and self.signal_variance > 0):
            raise ValueError("signal_variance must be positive")
        if not (math.isfinite(self.noise_variance) and self.noise_variance >= 0):
            raise ValueError("noise_variance must be non-negative")


@dataclass(frozen=True)
class GpModel:
    """Fitted GP posterior. Immutable; predict is safe to share across threads."""

    inputs: np.ndarray
    outputs: np.ndarray
    kernel: KernelParams
    factor: np.ndarray  # lower Cholesky of K + (noise + jitter) I
    alpha: np.ndarray  # (K + (noise + jitter) I)^-1 y_std
    jitter: float
    output_shift: float
    output_scale: float

    def predict_many(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and std at each query row, de-standardized.

        Negative predictive variance from round-off is clamped to zero.
        """
        Xq = _as_matrix(queries, self.inputs.shape[1], what="query")
        mean_s, var = kernels.cross_predict(
            self.factor, self.alpha, self.inputs, Xq,
            self.kernel.lengthscales, self.kernel.signal_variance,
        )
        np.maximum(var, 0.0, out=var)
        mean = self.output_shift + self.output_scale * mean_s
        std = self.output_scale * np.sqrt(var)
        return mean, std

    def predict(self, x: np.ndarray) -> tuple[float, float]:
        """Posterior (mean, std) at a single point."""
        mean, std = self.predict_many(np.asarray(x, dtype=float).reshape(1, -1))
        return float(mean[0]), float(std[0])


def _as_matrix(inputs, dim: int | None = None, what: str = "input") -> np.ndarray:
    X = np.ascontiguousarray(inputs, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError(f"{what}s must form a 2-D array, got shape {X.shape}")
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"{what} dimension {X.shape[1]} does not match model dimension {dim}")
    return X


def _standardize(y: np.ndarray) -> tuple[np.ndarray, float, float]:
    shift = float(np.mean(y))
    scale = float(np.std(y))
    if not math.isfinite(scale) or scale <= 1e-12 * max(1.0, abs(shift)):
        scale = 1.0  # all outputs equal
    return (y - shift) / scale, shift, scale


def _check_data(inputs, outputs) -> tuple[np.ndarray, np.ndarray]:
    X = _as_matrix(inputs)
    y = np.ascontiguousarray(outputs, dtype=float)
    if y.ndim != 1:
        raise ValueError("outputs must be 1-D")
    if len(y) == 0:
        raise ValueError("at least one observation is required")
    if X.shape[0] != len(y):
        raise ValueError(f"{X.shape[0]} inputs vs {len(y)} outputs")
    if not np.all(np.isfinite(y)):
        raise ValueError("outputs must be finite")
    if not np.all(np.isfinite(X)):
        raise ValueError("inputs must be finite")
    return X, y


def _lml_escalating(X, y_std, ls, sig, noise) -> tuple[float, float]:
    """LML with jitter escalation; (-inf, last jitter) when the cap is passed."""
    jitter = _JITTER_FACTOR * sig  # trace(K)/n is sig by construction
    while jitter <= _JITTER_CAP:
        value = kernels.lml(X, y_std, ls, sig, noise + jitter)
        if math.isfinite(value):
            return value, jitter
        jitter *= 10.0
    return -math.inf, jitter


def log_marginal_likelihood(inputs, outputs, kernel: KernelParams) -> float:
    """Exact Gaussian log marginal likelihood of the standardized outputs.

    Raises NumericalFailure when the kernel matrix cannot be factorized even
    at the jitter ceiling.
    """
    X, y = _check_data(inputs, outputs)
    if X.shape[1] != len(kernel.lengthscales):
        raise ValueError("kernel dimension does not match inputs")
    y_std, _, _ = _standardize(y)
    value, _ = _lml_escalating(
        X, y_std, kernel.lengthscales, kernel.signal_variance, kernel.noise_variance
    )
    if not math.isfinite(value):
        raise NumericalFailure("kernel matrix not positive definite after jitter escalation")
    return value


def fit(inputs, outputs, seed: int) -> GpModel:
    """Fit kernel hyperparameters by maximizing the log marginal likelihood.

    Runs _N_STARTS Nelder-Mead searches over (log lengthscales, log signal
    variance, log noise variance) from seeded uniform draws inside the fit
    bounds and keeps the best. Deterministic given (data, seed).
    """
    X, y = _check_data(inputs, outputs)
    n, d = X.shape
    y_std, shift, scale = _standardize(y)

    low = np.array([_LOG_LS_LOW] * d + [_LOG_SIG_LOW, _LOG_NOISE_LOW])
    high = np.array([_LOG_LS_HIGH] * d + [_LOG_SIG_HIGH, _LOG_NOISE_HIGH])

    def objective(log_params: np.ndarray) -> float:
        ls = np.exp(log_params[:d])
        sig = float(np.exp(log_params[d]))
        noise = float(np.exp(log_params[d + 1]))
        value, _ = _lml_escalating(X, y_std, ls, sig, noise)
        return -value if math.isfinite(value) else _PENALTY

    rng = np.random.default_rng(seed)
    starts = rng.uniform(low, high, size=(_N_STARTS, d + 2))
    best_fun = math.inf
    best_x = starts[0]
    for x0 in starts:
        result = scipy.optimize.minimize(
            objective, x0, method="Nelder-Mead",
            bounds=list(zip(low, high)),
            options={"maxiter": _MAX_ITER, "xatol": 1e-3, "fatol": 1e-6},
        )
        if result.fun < best_fun:  # strict: ties keep the earliest restart
            best_fun = result.fun
            best_x = result.x

    kernel = KernelParams(
        lengthscales=np.exp(best_x[:d]),
        signal_variance=float(np.exp(best_x[d])),
        noise_variance=float(np.exp(best_x[d + 1])),
    )
    return _assemble(X, y, y_std, shift, scale, kernel)


def from_params(inputs, outputs, kernel: KernelParams) -> GpModel:
    """Build a model with fixed kernel hyperparameters (no fitting)."""
    X, y = _check_data(inputs, outputs)
    if X.shape[1] != len(kernel.lengthscales):
        raise ValueError("kernel dimension does not match inputs")
    y_std, shift, scale = _standardize(y)
    return _assemble(X, y, y_std, shift, scale, kernel)


def _assemble(X, y, y_std, shift, scale, kernel: KernelParams) -> GpModel:
    sig = kernel.signal_variance
    jitter = _JITTER_FACTOR * sig
    while jitter <= _JITTER_CAP:
        L, ok = kernels.factorize(
            X, kernel.lengthscales, sig, kernel.noise_variance + jitter
        )
        if ok:
            if jitter > _JITTER_FACTOR * sig:
                logger.debug("jitter escalated to %.1e", jitter)
            alpha = kernels.solve_chol(L, y_std)
            return GpModel(
                inputs=X, outputs=y, kernel=kernel, factor=L, alpha=alpha,
                jitter=jitter, output_shift=shift, output_scale=scale,
            )
        jitter *= 10.0
    raise NumericalFailure("kernel matrix not positive definite after jitter escalation")


def predict(model: GpModel, x) -> tuple[float, float]:
    """Posterior (mean, std) of the model at one encoded point."""
    return model.predict(x)
