"""Unit coverage for the synthetic dataset and the per-request trainer."""

import math

import numpy as np
import pytest

from adapter.data import DATASET_SEED, make_dataset, make_raw
from adapter.training import (
    AdapterConfig,
    AdapterError,
    Mlp,
    SwaMode,
    TrainingDiverged,
    average_checkpoints,
    default_dataset,
    parse_params,
    train_once,
)

GOOD = {"learning_rate": 0.05, "batch_size": 8, "weight_decay": 0.01}


@pytest.fixture(scope="module")
def dataset():
    return default_dataset(AdapterConfig())


class TestDataset:
    def test_generation_is_fixed(self):
        a = make_dataset()
        b = make_dataset()
        np.testing.assert_array_equal(a.train_x, b.train_x)
        np.testing.assert_array_equal(a.val_y, b.val_y)

    def test_holdout_fraction(self, dataset):
        n = dataset.train_x.shape[0] + dataset.val_x.shape[0]
        assert dataset.val_x.shape[0] == round(0.1 * n)

    def test_split_is_a_partition(self, dataset):
        x, _ = make_raw()
        combined = np.vstack([dataset.train_x, dataset.val_x])
        assert combined.shape == x.shape
        # every original row appears exactly once across the two splits
        assert {row.tobytes() for row in combined} == {row.tobytes() for row in x}

    def test_labels_are_noisy_but_separable(self):
        x, y = make_raw()
        assert set(np.unique(y)) == {0.0, 1.0}
        # the flipped fraction keeps a perfect linear fit impossible
        rng = np.random.default_rng(DATASET_SEED)
        rng.normal(size=x.shape)  # consume the feature draw
        direction = rng.normal(size=x.shape[1])
        clean = (x @ (direction / np.linalg.norm(direction)) > 0).astype(float)
        flip_rate = float(np.mean(clean != y))
        assert 0.05 < flip_rate < 0.15


class TestParamParsing:
    def test_valid(self):
        assert parse_params(GOOD) == (0.05, 8, 0.01)

    def test_batch_size_arrives_as_float(self):
        lr, batch, decay = parse_params(
            {"learning_rate": 0.05, "batch_size": 32.0, "weight_decay": 0.0}
        )
        assert batch == 32 and isinstance(batch, int)

    @pytest.mark.parametrize("name", ["momentum", "epochs", "dropout"])
    def test_unknown_param_named_in_error(self, name):
        params = dict(GOOD, **{name: 1.0})
        with pytest.raises(AdapterError, match=name):
            parse_params(params)

    @pytest.mark.parametrize("name", ["learning_rate", "batch_size", "weight_decay"])
    def test_missing_param_named_in_error(self, name):
        params = dict(GOOD)
        del params[name]
        with pytest.raises(AdapterError, match=name):
            parse_params(params)

    @pytest.mark.parametrize(
        "bad",
        [
            {"learning_rate": -0.1},
            {"learning_rate": math.inf},
            {"batch_size": 0},
            {"weight_decay": -1.0},
            {"learning_rate": "adamw"},
        ],
    )
    def test_bad_values_rejected(self, bad):
        with pytest.raises(AdapterError):
            parse_params(dict(GOOD, **bad))

    def test_params_must_be_an_object(self):
        with pytest.raises(AdapterError, match="object"):
            parse_params([1, 2, 3])


class TestAdapterConfig:
    def test_defaults_valid(self):
        cfg = AdapterConfig()
        assert cfg.max_epochs == 10 and cfg.patience == 3
        assert not cfg.swa.enabled

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"patience": 11},
            {"patience": 0},
            {"max_epochs": 0},
            {"holdout_fraction": 0.0},
            {"holdout_fraction": 1.0},
        ],
    )
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ValueError):
            AdapterConfig(**kwargs)

    def test_swa_parse(self):
        assert SwaMode.parse("off") == SwaMode(0)
        assert SwaMode.parse("last_2") == SwaMode(2)
        assert SwaMode.parse("last_5").last_k == 5
        with pytest.raises(ValueError):
            SwaMode.parse("last_1")
        with pytest.raises(ValueError):
            SwaMode.parse("always")


class TestTraining:
    def test_zero_learning_rate_returns_initial_loss(self, dataset):
        cfg = AdapterConfig(seed=3)
        out = train_once(
            {"learning_rate": 0.0, "batch_size": 8, "weight_decay": 0.0}, cfg, dataset
        )
        reference = Mlp(dataset.train_x.shape[1], np.random.default_rng(3))
        assert out.train_loss == reference.data_loss(dataset.train_x, dataset.train_y)
        assert out.val_accuracy == reference.accuracy(dataset.val_x, dataset.val_y)

    @pytest.mark.parametrize("patience", [1, 2, 3])
    def test_constant_metric_stops_exactly_patience_after_best(self, dataset, patience):
        # lr = 0 never improves, so the best epoch is the first one
        cfg = AdapterConfig(patience=patience)
        out = train_once(
            {"learning_rate": 0.0, "batch_size": 16, "weight_decay": 0.0}, cfg, dataset
        )
        assert out.epochs_run == 1 + patience
        assert out.stopped_early

    def test_never_trains_past_max_epochs(self, dataset):
        cfg = AdapterConfig(max_epochs=4, patience=4)
        out = train_once(GOOD, cfg, dataset)
        assert out.epochs_run <= 4

    def test_deterministic_given_seed(self, dataset):
        cfg = AdapterConfig(seed=9)
        assert train_once(GOOD, cfg, dataset) == train_once(GOOD, cfg, dataset)

    def test_seed_changes_the_run(self, dataset):
        a = train_once(GOOD, AdapterConfig(seed=0), dataset)
        b = train_once(GOOD, AdapterConfig(seed=1), dataset)
        assert a.train_loss != b.train_loss

    def test_training_actually_learns(self, dataset):
        out = train_once(GOOD, AdapterConfig(), dataset)
        init = Mlp(dataset.train_x.shape[1], np.random.default_rng(0))
        assert out.train_loss < init.data_loss(dataset.train_x, dataset.train_y) - 0.1
        assert out.val_accuracy > 0.8

    def test_divergence_raises(self, dataset):
        with pytest.raises(TrainingDiverged, match="non-finite"):
            train_once(
                {"learning_rate": 100.0, "batch_size": 8, "weight_decay": 0.05},
                AdapterConfig(),
                dataset,
            )

    def test_swa_stays_near_the_plain_run(self, dataset):
        # paired comparison on a converged configuration
        for seed in range(4):
            plain = train_once(GOOD, AdapterConfig(seed=seed), dataset)
            averaged = train_once(
                GOOD, AdapterConfig(seed=seed, swa=SwaMode(2)), dataset
            )
            assert abs(plain.val_accuracy - averaged.val_accuracy) <= 0.05
            assert plain.train_loss == averaged.train_loss  # loss is pre-averaging


class TestCheckpointAveraging:
    def test_mean_of_two_is_exact(self):
        rng = np.random.default_rng(5)
        a = [rng.normal(size=(4, 3)), rng.normal(size=3)]
        b = [rng.normal(size=(4, 3)), rng.normal(size=3)]
        avg = average_checkpoints([a, b])
        for avg_arr, a_arr, b_arr in zip(avg, a, b):
            np.testing.assert_array_equal(avg_arr, (a_arr + b_arr) / 2.0)

    def test_single_checkpoint_is_identity(self):
        a = [np.arange(6.0).reshape(2, 3)]
        np.testing.assert_array_equal(average_checkpoints([a])[0], a[0])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            average_checkpoints([])
