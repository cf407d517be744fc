"""
Synthetic bars, CIFAR-10 binary reader and deterministic batching
"""

import numpy as np
import pytest

from dnnet_cli.core.config import ArchDescriptor, DataConfig
from dnnet_cli.core.errors import ConfigError, DataError
from dnnet_cli.data import (
    BAR_CLASSES,
    Dataset,
    bar_templates,
    batches,
    load_cifar10_binary,
    load_datasets,
    read_cifar10_batch,
    sequential_batches,
    split_train_test,
    synth_bars,
)
from dnnet_cli.data.cifar import RECORD_BYTES, TEST_FILE, TRAIN_FILES


def write_cifar_file(path, labels, seed=0):
    rng = np.random.default_rng(seed)
    records = np.zeros((len(labels), RECORD_BYTES), dtype=np.uint8)
    records[:, 0] = labels
    records[:, 1:] = rng.integers(0, 256, size=(len(labels), RECORD_BYTES - 1), dtype=np.uint8)
    records.tofile(path)
    return records


@pytest.fixture
def cifar_dir(tmp_path):
    for i, name in enumerate(TRAIN_FILES):
        write_cifar_file(tmp_path / name, [i, i + 1, 9], seed=i)
    write_cifar_file(tmp_path / TEST_FILE, [0, 5, 3], seed=9)
    return tmp_path


# ---------------------------------------------------------------------------
# Synthetic bars
# ---------------------------------------------------------------------------

class TestSynthBars:
    def test_noise_free_images_are_templates(self):
        data = synth_bars(30, hw=8, num_classes=3, noise_sigma=0.0)
        templates = bar_templates(8, 3).astype(np.float32)
        for image, label in zip(data.images, data.labels):
            assert np.array_equal(image[0], templates[label])

    def test_templates_are_distinct(self):
        templates = bar_templates(8, len(BAR_CLASSES)).reshape(len(BAR_CLASSES), -1)
        assert len(np.unique(templates, axis=0)) == len(BAR_CLASSES)
        assert templates.max() == 1.0 and templates.min() == 0.0

    def test_same_seed_same_data(self):
        a, b = synth_bars(50, seed=3), synth_bars(50, seed=3)
        assert np.array_equal(a.images, b.images)
        assert np.array_equal(a.labels, b.labels)
        assert not np.array_equal(a.images, synth_bars(50, seed=4).images)

    def test_splits_are_independent_draws(self):
        assert not np.array_equal(synth_bars(50, split="train").images, synth_bars(50, split="test").images)

    def test_balanced_labels(self):
        assert synth_bars(600).class_counts().tolist() == [200, 200, 200]
        assert synth_bars(10, num_classes=3).class_counts().tolist() == [4, 3, 3]

    def test_pixels_clipped_to_unit_range(self):
        data = synth_bars(40, noise_sigma=2.0)
        assert data.images.min() >= 0 and data.images.max() <= 1
        assert data.images.dtype == np.float32

    def test_channels_and_non_square(self):
        data = synth_bars(5, hw=(6, 10), channels=3)
        assert data.images.shape == (5, 3, 6, 10)
        assert data.hw == (6, 10)

    @pytest.mark.parametrize("kwargs", [{"count": 0}, {"count": 5, "num_classes": 7}, {"count": 5, "noise_sigma": -1}])
    def test_invalid_arguments(self, kwargs):
        with pytest.raises(ConfigError):
            synth_bars(**kwargs)


# ---------------------------------------------------------------------------
# Dataset and batching
# ---------------------------------------------------------------------------

class TestDataset:
    def test_validation(self):
        with pytest.raises(DataError):
            Dataset(np.zeros((2, 1, 4, 4)), np.array([0, 3]), 3)
        with pytest.raises(DataError):
            Dataset(np.full((2, 1, 4, 4), 2.0), np.array([0, 1]), 3)
        with pytest.raises(DataError):
            Dataset(np.zeros((2, 4, 4)), np.array([0, 1]), 3)

    def test_immutable(self, bars_train):
        with pytest.raises(ValueError):
            bars_train.images[0, 0, 0, 0] = 0.5

    def test_split_is_a_partition(self, bars_train):
        train, test = split_train_test(bars_train, 20, seed=1)
        assert (train.count, test.count) == (76, 20)
        assert train.split == "train" and test.split == "test"
        merged = np.concatenate([train.images, test.images]).reshape(96, -1)
        assert len(np.unique(merged, axis=0)) == len(np.unique(bars_train.images.reshape(96, -1), axis=0))

    def test_split_size_checked(self, bars_train):
        with pytest.raises(ConfigError):
            split_train_test(bars_train, 96)


class TestBatches:
    def test_epoch_is_a_partition(self, bars_train):
        seen = np.concatenate([labels for _, labels in batches(bars_train, 16, seed=0)])
        assert len(seen) == 96
        assert sorted(seen.tolist()) == sorted(bars_train.labels.tolist())

    def test_partial_batch_dropped(self, bars_train):
        sizes = [len(labels) for _, labels in batches(bars_train, 40, seed=0)]
        assert sizes == [40, 40]

    def test_whole_dataset_batch(self, bars_train):
        (images, labels), = list(batches(bars_train, 96, seed=0))
        assert images.shape[0] == 96
        assert sorted(labels.tolist()) == sorted(bars_train.labels.tolist())

    @pytest.mark.parametrize("size", [0, 97])
    def test_batch_size_range(self, bars_train, size):
        with pytest.raises(ConfigError):
            next(batches(bars_train, size, seed=0))

    def test_order_depends_on_seed_and_epoch(self, bars_train):
        first = lambda seed, epoch: next(batches(bars_train, 16, seed, epoch))[0]  # noqa: E731
        assert np.array_equal(first(0, 0), first(0, 0))
        assert not np.array_equal(first(0, 0), first(0, 1))
        assert not np.array_equal(first(0, 0), first(1, 0))

    def test_augmentation_is_deterministic(self, bars_train):
        a = next(batches(bars_train, 16, 0, 0, flip=True, crop_pad=2))[0]
        b = next(batches(bars_train, 16, 0, 0, flip=True, crop_pad=2))[0]
        plain = next(batches(bars_train, 16, 0, 0))[0]
        assert np.array_equal(a, b)
        assert not np.array_equal(a, plain)
        assert a.shape == plain.shape

    def test_sequential_batches_cover_everything(self, bars_test):
        offsets = [offset for offset, _, _ in sequential_batches(bars_test, 25)]
        assert offsets == [0, 25, 50]
        assert sum(len(labels) for _, _, labels in sequential_batches(bars_test, 25)) == 60


# ---------------------------------------------------------------------------
# CIFAR-10 binary
# ---------------------------------------------------------------------------

class TestCifar:
    def test_reads_records(self, tmp_path):
        records = write_cifar_file(tmp_path / "batch.bin", [3, 7])
        images, labels = read_cifar10_batch(tmp_path / "batch.bin", records=2)
        assert labels.tolist() == [3, 7]
        assert images.shape == (2, 3, 32, 32)
        assert np.array_equal(images[1].ravel(), records[1, 1:])

    def test_loads_train_and_test(self, cifar_dir):
        train, test = load_cifar10_binary(cifar_dir, records_per_file=3)
        assert (train.count, test.count) == (15, 3)
        assert train.labels[:3].tolist() == [0, 1, 9]
        assert test.labels.tolist() == [0, 5, 3]
        assert train.num_classes == 10
        assert 0 <= train.images.min() and train.images.max() <= 1

    def test_short_file(self, cifar_dir):
        path = cifar_dir / TRAIN_FILES[2]
        path.write_bytes(path.read_bytes()[:-1])
        with pytest.raises(DataError, match="bytes"):
            load_cifar10_binary(cifar_dir, records_per_file=3)

    def test_missing_file(self, cifar_dir):
        (cifar_dir / TEST_FILE).unlink()
        with pytest.raises(DataError, match="missing"):
            load_cifar10_binary(cifar_dir, records_per_file=3)

    def test_label_out_of_range(self, tmp_path):
        write_cifar_file(tmp_path / "batch.bin", [1, 10])
        with pytest.raises(DataError, match="label"):
            read_cifar10_batch(tmp_path / "batch.bin", records=2)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(DataError):
            load_cifar10_binary(tmp_path / "nope")


class TestLoadDatasets:
    def test_synthetic_follows_the_architecture(self, toy_arch):
        train, test = load_datasets(DataConfig(train_count=30, test_count=12), toy_arch)
        assert train.images.shape == (30, 1, 8, 8)
        assert test.count == 12
        assert train.num_classes == toy_arch.classes

    def test_cifar_source_reads_full_size_files(self, cifar_dir, toy_arch):
        with pytest.raises(DataError):
            load_datasets(DataConfig(source=f"cifar10:{cifar_dir}"), toy_arch)

    def test_unknown_source(self, toy_arch):
        with pytest.raises(ConfigError):
            load_datasets(DataConfig(source="mnist"), toy_arch)

    def test_precision_carried_to_images(self):
        arch = ArchDescriptor(precision="float64")
        train, _ = load_datasets(DataConfig(train_count=6, test_count=3), arch)
        assert train.images.dtype == np.float64
