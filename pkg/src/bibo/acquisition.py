"""Acquisition scoring (EI, UCB) and candidate-set maximization.

Everything here works in the internal maximize convention: callers negate
training losses before fitting the inner GP, so one scoring path serves
both levels. EI uses the closed-form Gaussian expectation; UCB is the
plain mean + kappa * std rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.special

from bibo.space import Config, Level, SearchSpace
from bibo.surrogate import GpModel

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class AcqVariant(Enum):
    EI = "EI"
    UCB = "UCB"


@dataclass(frozen=True)
class AcquisitionKind:
    """Which acquisition to use; kappa weighs exploration for UCB only."""

    variant: AcqVariant
    kappa: float = 2.0

    def __post_init__(self) -> None:
        if self.variant is AcqVariant.UCB and not (
            math.isfinite(self.kappa) and self.kappa > 0
        ):
            raise ValueError("UCB requires kappa > 0")


@dataclass(frozen=True)
class Incumbent:
    """Best observed value so far, in the internal maximize convention."""

    value: float


def ei_values(means: np.ndarray, stds: np.ndarray, f_best: float) -> np.ndarray:
    """Vectorized expected improvement over f_best; zero-std entries collapse
    to max(mean - f_best, 0)."""
    means = np.asarray(means, dtype=float)
    stds = np.asarray(stds, dtype=float)
    improvement = means - f_best
    out = np.maximum(improvement, 0.0)
    positive = stds > 0.0
    if np.any(positive):
        imp = improvement[positive]
        std = stds[positive]
        z = imp / std
        pdf = np.exp(-0.5 * z * z) / _SQRT_2PI
        out[positive] = imp * scipy.special.ndtr(z) + std * pdf
    np.maximum(out, 0.0, out=out)  # round-off can leave -1e-18 behind
    return out


def ei_score(mean: float, std: float, incumbent: Incumbent) -> float:
    """Expected improvement of N(mean, std^2) over the incumbent."""
    _check_finite(mean=mean, std=std, f_best=incumbent.value)
    if std < 0:
        raise ValueError("std must be non-negative")
    return float(ei_values(np.array([mean]), np.array([std]), incumbent.value)[0])


def ucb_score(mean: float, std: float, kappa: float) -> float:
    """Upper confidence bound: exactly mean + kappa * std."""
    _check_finite(mean=mean, std=std, kappa=kappa)
    if std < 0:
        raise ValueError("std must be non-negative")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    return mean + kappa * std


def _check_finite(**named: float) -> None:
    for name, value in named.items():
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value}")


def score_batch(
    acq: AcquisitionKind, means: np.ndarray, stds: np.ndarray, incumbent: Incumbent
) -> np.ndarray:
    if acq.variant is AcqVariant.EI:
        return ei_values(means, stds, incumbent.value)
    return np.asarray(means, dtype=float) + acq.kappa * np.asarray(stds, dtype=float)


def propose(
    model: GpModel,
    space: SearchSpace,
    level: Level | None,
    acq: AcquisitionKind,
    incumbent: Incumbent,
    candidates: int,
    rng: np.random.Generator,
) -> Config:
    """Draw `candidates` random configurations and return the acquisition argmax.

    Ties break toward the lowest candidate index, so the result is fully
    determined by (model, space, acq, incumbent, seed).
    """
    if candidates <= 0:
        raise ValueError("candidates must be positive")
    sampled = [space.sample(level, rng) for _ in range(candidates)]
    X = space.encode_many(sampled, level)
    means, stds = model.predict_many(X)
    scores = score_batch(acq, means, stds, incumbent)
    return sampled[int(np.argmax(scores))]
