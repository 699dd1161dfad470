"""Synthetic binary classification set: linearly separable plus label noise.

The generation seed is a package constant so every server process, test, and
paired comparison sees the identical dataset. The label flips put a floor
under the achievable loss while leaving accuracy mostly recoverable, so
training loss and validation accuracy genuinely disagree about which
configurations are best.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DATASET_SEED = 520_413
N_SAMPLES = 1000
N_FEATURES = 16
FLIP_FRACTION = 0.1


@dataclass(frozen=True)
class Dataset:
    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray


def make_raw(
    n: int = N_SAMPLES, d: int = N_FEATURES, seed: int = DATASET_SEED
) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d))
    direction = rng.normal(size=d)
    direction /= np.linalg.norm(direction)
    y = (x @ direction > 0.0).astype(float)
    flips = rng.random(n) < FLIP_FRACTION
    y[flips] = 1.0 - y[flips]
    return x, y


def make_dataset(holdout_fraction: float = 0.1, seed: int = DATASET_SEED) -> Dataset:
    """Generate and split; the split permutation rides on the same seed so the
    holdout set is a property of the dataset, not of the server instance."""
    x, y = make_raw(seed=seed)
    n = x.shape[0]
    order = np.random.default_rng(seed + 1).permutation(n)
    n_val = max(1, int(round(n * holdout_fraction)))
    val, train = order[:n_val], order[n_val:]
    return Dataset(
        train_x=x[train], train_y=y[train], val_x=x[val], val_y=y[val]
    )
