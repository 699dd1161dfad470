"""Per-request training: a small ReLU classifier under SGD with decoupled
weight decay, early stopping on validation accuracy, and optional averaging
of the trailing epoch checkpoints before the final evaluation.

Extension point: `train_once` is the seam between plumbing and workload. A
real fine-tuning script replaces this one function, keeping the same inputs
(the request params plus an AdapterConfig) and outputs (final-epoch training
loss, validation metric, epoch count), and the protocol loop, early stopping
contract, and checkpoint averaging above it carry over unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from adapter.data import Dataset, make_dataset

HIDDEN_UNITS = 8

REQUIRED_PARAMS = ("learning_rate", "batch_size", "weight_decay")


class AdapterError(ValueError):
    """Malformed request parameters."""


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class SwaMode:
    """off, or uniform averaging of the last k epoch checkpoints (k >= 2).

    Averaging happens within a single training run, over that run's trailing
    epoch checkpoints. Averaging final weights across separate runs would be
    a different scheme; this implementation deliberately takes the
    within-run reading and keeps the other out of scope.
    """

    last_k: int = 0  # 0 disables averaging

    def __post_init__(self) -> None:
        if self.last_k != 0 and self.last_k < 2:
            raise ValueError("checkpoint averaging needs k >= 2")

    @property
    def enabled(self) -> bool:
        return self.last_k >= 2

    @classmethod
    def parse(cls, text: str) -> "SwaMode":
        if text == "off":
            return cls(0)
        if text.startswith("last_"):
            try:
                return cls(int(text[len("last_"):]))
            except ValueError:
                pass
        raise ValueError(f"swa must be 'off' or 'last_<k>', got {text!r}")


@dataclass(frozen=True)
class AdapterConfig:
    seed: int = 0
    max_epochs: int = 10
    patience: int = 3
    swa: SwaMode = field(default_factory=SwaMode)
    holdout_fraction: float = 0.1

    def __post_init__(self) -> None:
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be positive")
        if not 1 <= self.patience <= self.max_epochs:
            raise ValueError("patience must be in [1, max_epochs]")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must be in (0, 1)")


@dataclass(frozen=True)
class Outcome:
    train_loss: float
    val_accuracy: float
    epochs_run: int
    stopped_early: bool


def parse_params(params: dict) -> tuple[float, int, float]:
    if not isinstance(params, dict):
        raise AdapterError("params must be an object")
    for name in params:
        if name not in REQUIRED_PARAMS:
            raise AdapterError(f"unknown parameter {name!r}")
    for name in REQUIRED_PARAMS:
        if name not in params:
            raise AdapterError(f"missing parameter {name!r}")
    try:
        lr = float(params["learning_rate"])
        batch = int(round(float(params["batch_size"])))
        decay = float(params["weight_decay"])
    except (TypeError, ValueError) as err:
        raise AdapterError(f"non-numeric parameter: {err}") from None
    if not math.isfinite(lr) or lr < 0:
        raise AdapterError("learning_rate must be finite and non-negative")
    if batch < 1:
        raise AdapterError("batch_size must be a positive integer")
    if not math.isfinite(decay) or decay < 0:
        raise AdapterError("weight_decay must be finite and non-negative")
    return lr, batch, decay


class Mlp:
    """One hidden ReLU layer, logistic output. Parameters live in a list so
    checkpoints copy and average elementwise without knowing the shapes."""

    def __init__(self, d: int, rng: np.random.Generator, hidden: int = HIDDEN_UNITS):
        self.params: list[np.ndarray] = [
            rng.normal(0.0, 1.0 / math.sqrt(d), size=(d, hidden)),
            np.zeros(hidden),
            rng.normal(0.0, 1.0 / math.sqrt(hidden), size=hidden),
            np.zeros(1),
        ]

    def _forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        w1, b1, w2, b2 = self.params
        hidden = np.maximum(x @ w1 + b1, 0.0)
        return hidden, hidden @ w2 + b2[0]

    def data_loss(self, x: np.ndarray, y: np.ndarray) -> float:
        _, logits = self._forward(x)
        # log(1 + e^-|z|) + max(z, 0) - y*z, the overflow-free cross-entropy
        loss = np.logaddexp(0.0, -np.abs(logits)) + np.maximum(logits, 0.0) - y * logits
        return float(np.mean(loss))

    def accuracy(self, x: np.ndarray, y: np.ndarray) -> float:
        _, logits = self._forward(x)
        return float(np.mean((logits > 0.0) == (y > 0.5)))

    def sgd_step(self, x: np.ndarray, y: np.ndarray, lr: float, decay: float) -> None:
        w1, b1, w2, b2 = self.params
        hidden, logits = self._forward(x)
        n = x.shape[0]
        dlogits = (1.0 / (1.0 + np.exp(-logits)) - y) / n
        grad_w2 = hidden.T @ dlogits
        grad_b2 = float(np.sum(dlogits))
        dhidden = np.outer(dlogits, w2) * (hidden > 0.0)
        grad_w1 = x.T @ dhidden
        grad_b1 = dhidden.sum(axis=0)
        # decoupled decay: shrink weights (not biases) before the gradient step
        w1 *= 1.0 - lr * decay
        w2 *= 1.0 - lr * decay
        w1 -= lr * grad_w1
        b1 -= lr * grad_b1
        w2 -= lr * grad_w2
        b2 -= lr * grad_b2

    def checkpoint(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params]

    def load(self, params: list[np.ndarray]) -> None:
        self.params = [p.copy() for p in params]


def average_checkpoints(checkpoints: list[list[np.ndarray]]) -> list[np.ndarray]:
    """Uniform elementwise mean over a non-empty checkpoint list."""
    if not checkpoints:
        raise ValueError("no checkpoints to average")
    return [
        np.mean([ckpt[i] for ckpt in checkpoints], axis=0)
        for i in range(len(checkpoints[0]))
    ]


def train_once(params: dict, cfg: AdapterConfig, dataset: Dataset) -> Outcome:
    """Train from a fresh seeded init; every call is a pure function of
    (params, cfg, dataset), which is what makes repeated requests identical."""
    lr, batch, decay = parse_params(params)
    rng = np.random.default_rng(cfg.seed)
    model = Mlp(dataset.train_x.shape[1], rng)
    n = dataset.train_x.shape[0]

    checkpoints: list[list[np.ndarray]] = []
    best_acc = -math.inf
    best_epoch = 0
    train_loss = math.nan
    epochs_run = 0
    stopped_early = False

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        # overflow here is an expected outcome (huge learning rates), reported
        # below via the finite check rather than as numpy warnings
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n, batch):
                rows = order[start : start + batch]
                model.sgd_step(dataset.train_x[rows], dataset.train_y[rows], lr, decay)
            train_loss = model.data_loss(dataset.train_x, dataset.train_y)
        epochs_run = epoch
        if not math.isfinite(train_loss):
            raise TrainingDiverged(f"non-finite training loss at epoch {epoch}")
        checkpoints.append(model.checkpoint())
        val_acc = model.accuracy(dataset.val_x, dataset.val_y)
        if val_acc > best_acc:
            best_acc = val_acc
            best_epoch = epoch
        elif epoch - best_epoch >= cfg.patience:
            stopped_early = True
            break

    if cfg.swa.enabled:
        model.load(average_checkpoints(checkpoints[-cfg.swa.last_k :]))
    return Outcome(
        train_loss=train_loss,
        val_accuracy=model.accuracy(dataset.val_x, dataset.val_y),
        epochs_run=epochs_run,
        stopped_early=stopped_early,
    )


def default_dataset(cfg: AdapterConfig) -> Dataset:
    return make_dataset(holdout_fraction=cfg.holdout_fraction)
