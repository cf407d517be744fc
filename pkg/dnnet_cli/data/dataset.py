"""
In-memory labeled image datasets and deterministic batching
"""

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import ConfigError, DataError
from ..numerics.rng import Rng


@dataclass(frozen=True, eq=False)
class Dataset:
    """Images [count, channels, H, W] in [0, 1] with integer class labels"""
    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str = "train"
    name: str = field(default="", compare=False)

    def __post_init__(self):
        images = np.ascontiguousarray(self.images)
        labels = np.asarray(self.labels, dtype=np.int64)
        if images.ndim != 4:
            raise DataError(f"Images must be [count, channels, H, W], got {list(images.shape)}")
        if images.shape[0] == 0:
            raise DataError("Dataset is empty")
        if labels.shape != (images.shape[0],):
            raise DataError(f"{images.shape[0]} images but {labels.size} labels")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise DataError(f"Labels must lie in [0, {self.num_classes})")
        if images.min() < 0 or images.max() > 1:
            raise DataError("Pixel values must lie in [0, 1]")
        images.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    @property
    def count(self) -> int:
        return self.images.shape[0]

    @property
    def channels(self) -> int:
        return self.images.shape[1]

    @property
    def hw(self) -> Tuple[int, int]:
        return self.images.shape[2], self.images.shape[3]

    def __len__(self) -> int:
        return self.count

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, indices: Sequence[int], split: Optional[str] = None) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[indices], self.labels[indices], self.num_classes,
                       split or self.split, self.name)

    def astype(self, dtype: np.dtype) -> "Dataset":
        return Dataset(self.images.astype(dtype), self.labels, self.num_classes, self.split, self.name)


def split_train_test(dataset: Dataset, test_count: int, seed: int = 0) -> Tuple[Dataset, Dataset]:
    """Random disjoint split; the permutation depends only on ``seed``"""
    if not 0 < test_count < dataset.count:
        raise ConfigError(f"test_count must lie in (0, {dataset.count}), got {test_count}")
    order = Rng(seed).child("split").permutation(dataset.count)
    return (dataset.subset(np.sort(order[test_count:]), "train"),
            dataset.subset(np.sort(order[:test_count]), "test"))


def _augment(images: np.ndarray, rng: Rng, flip: bool, crop_pad: int) -> np.ndarray:
    out = images.copy()
    if flip:
        mirrored = rng.child("flip").uniform((len(out),)) < 0.5
        out[mirrored] = out[mirrored, :, :, ::-1]
    if crop_pad:
        _, _, height, width = out.shape
        padded = np.pad(out, ((0, 0), (0, 0), (crop_pad, crop_pad), (crop_pad, crop_pad)))
        offsets = rng.child("crop").integers(0, 2 * crop_pad + 1, size=(len(out), 2))
        for i, (dy, dx) in enumerate(offsets):
            out[i] = padded[i, :, dy:dy + height, dx:dx + width]
    return out


def batches(
    dataset: Dataset,
    batch_size: int,
    seed: int,
    epoch: int = 0,
    flip: bool = False,
    crop_pad: int = 0,
) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """
    Shuffled mini-batches for one epoch.

    The permutation and augmentation draws are pure functions of (seed, epoch).
    The last partial batch is dropped so every step sees ``batch_size`` samples.
    """
    if not 1 <= batch_size <= dataset.count:
        raise ConfigError(f"batch_size must lie in [1, {dataset.count}], got {batch_size}")
    rng = Rng(seed, (int(epoch),))
    order = rng.child("shuffle").permutation(dataset.count)
    for start in range(0, dataset.count - batch_size + 1, batch_size):
        idx = order[start:start + batch_size]
        images = dataset.images[idx]
        if flip or crop_pad:
            images = _augment(images, rng.child(f"augment.{start}"), flip, crop_pad)
        yield images, dataset.labels[idx]


def sequential_batches(dataset: Dataset, batch_size: int) -> Iterator[Tuple[int, np.ndarray, np.ndarray]]:
    """In-order batches covering every sample (evaluation); yields (offset, images, labels)"""
    for start in range(0, dataset.count, batch_size):
        yield start, dataset.images[start:start + batch_size], dataset.labels[start:start + batch_size]
