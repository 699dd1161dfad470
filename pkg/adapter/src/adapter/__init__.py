"""Reference external objective for the optimization engine's wire protocol.

Trains a small classifier on a fixed synthetic dataset per request and
returns (train_loss, val_metric). See `adapter.training.train_once` for the
extension point where a real training workload plugs in.
"""

from adapter.data import DATASET_SEED, Dataset, make_dataset
from adapter.protocol import PROTOCOL_VERSION, serve
from adapter.training import (
    AdapterConfig,
    AdapterError,
    Mlp,
    Outcome,
    SwaMode,
    TrainingDiverged,
    average_checkpoints,
    train_once,
)

__all__ = [
    "AdapterConfig",
    "AdapterError",
    "DATASET_SEED",
    "Dataset",
    "Mlp",
    "Outcome",
    "PROTOCOL_VERSION",
    "SwaMode",
    "TrainingDiverged",
    "average_checkpoints",
    "make_dataset",
    "serve",
    "train_once",
]
