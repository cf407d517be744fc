"""
Reader for the CIFAR-10 binary distribution (data_batch_1..5.bin, test_batch.bin)
"""

from pathlib import Path
from typing import Tuple, Union

import numpy as np

from ..core.errors import DataError
from ..utils.logging import get_logger
from .dataset import Dataset

logger = get_logger(__name__)

IMAGE_SHAPE = (3, 32, 32)
RECORD_BYTES = 1 + 3 * 32 * 32
RECORDS_PER_FILE = 10000
TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILE = "test_batch.bin"
NUM_CLASSES = 10


def read_cifar10_batch(path: Union[str, Path], records: int = RECORDS_PER_FILE) -> Tuple[np.ndarray, np.ndarray]:
    """Raw (uint8 images [records, 3, 32, 32], labels) of one batch file; the whole file or nothing"""
    path = Path(path)
    expected = records * RECORD_BYTES
    if not path.is_file():
        raise DataError(f"CIFAR-10 file missing: {path} (expected {expected} bytes)")
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size != expected:
        raise DataError(f"CIFAR-10 file {path} has {raw.size} bytes, expected {expected}")
    table = raw.reshape(records, RECORD_BYTES)
    labels = table[:, 0].astype(np.int64)
    if labels.max() >= NUM_CLASSES:
        raise DataError(f"CIFAR-10 file {path} holds label {labels.max()} outside 0..9")
    return table[:, 1:].reshape(records, *IMAGE_SHAPE), labels


def _to_dataset(images: np.ndarray, labels: np.ndarray, split: str, dtype: np.dtype) -> Dataset:
    scaled = images.astype(dtype) / np.asarray(255, dtype=dtype)
    return Dataset(scaled, labels, NUM_CLASSES, split, name="cifar10")


def load_cifar10_binary(
    directory: Union[str, Path],
    records_per_file: int = RECORDS_PER_FILE,
    dtype: np.dtype = np.float32,
) -> Tuple[Dataset, Dataset]:
    """Train (5 files) and test (1 file) datasets, pixels scaled by 1/255, channel-major as stored"""
    directory = Path(directory).expanduser()
    if not directory.is_dir():
        raise DataError(f"CIFAR-10 directory not found: {directory}")

    parts = [read_cifar10_batch(directory / name, records_per_file) for name in TRAIN_FILES]
    test_images, test_labels = read_cifar10_batch(directory / TEST_FILE, records_per_file)
    train = _to_dataset(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]), "train", dtype)
    test = _to_dataset(test_images, test_labels, "test", dtype)
    logger.info("Loaded CIFAR-10 from %s: %d train / %d test", directory, train.count, test.count)
    return train, test
