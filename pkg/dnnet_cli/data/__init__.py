"""
Datasets: synthetic bars, CIFAR-10 binary batches, deterministic batching
"""

from typing import Tuple

import numpy as np

from ..core.config import ArchDescriptor, DataConfig
from ..core.errors import DataError
from .cifar import load_cifar10_binary, read_cifar10_batch
from .dataset import Dataset, batches, sequential_batches, split_train_test
from .synthetic import BAR_CLASSES, bar_templates, synth_bars


def load_datasets(data: DataConfig, arch: ArchDescriptor) -> Tuple[Dataset, Dataset]:
    """Train and test sets for a data source, checked against the architecture"""
    data.validate()
    dtype = np.dtype(arch.precision)
    if data.cifar_dir is not None:
        train, test = load_cifar10_binary(data.cifar_dir, dtype=dtype)
    else:
        common = dict(hw=arch.input_hw, num_classes=arch.classes, noise_sigma=data.noise_sigma,
                      seed=data.seed, channels=arch.in_channels, dtype=dtype)
        train = synth_bars(data.train_count, split="train", **common)
        test = synth_bars(data.test_count, split="test", **common)

    if train.channels != arch.in_channels or list(train.hw) != list(arch.input_hw):
        raise DataError(
            f"Data shape [{train.channels}, {train.hw[0]}, {train.hw[1]}] does not match the architecture "
            f"([{arch.in_channels}, {arch.input_hw[0]}, {arch.input_hw[1]}])"
        )
    if train.num_classes != arch.classes:
        raise DataError(f"Data has {train.num_classes} classes, architecture expects {arch.classes}")
    return train, test


__all__ = [
    "Dataset",
    "batches",
    "sequential_batches",
    "split_train_test",
    "synth_bars",
    "bar_templates",
    "BAR_CLASSES",
    "read_cifar10_batch",
    "load_cifar10_binary",
    "load_datasets",
]
