"""
Oriented-bar images: a small deterministic classification task
"""

from typing import Dict, Sequence, Tuple, Union

import numpy as np

from ..core.errors import ConfigError
from ..numerics.rng import Rng
from .dataset import Dataset

BAR_CLASSES = ("horizontal", "vertical", "diagonal", "anti_diagonal", "cross", "x")


def _hw(hw: Union[int, Sequence[int]]) -> Tuple[int, int]:
    if isinstance(hw, int):
        return hw, hw
    height, width = (int(v) for v in hw)
    return height, width


def bar_templates(hw: Union[int, Sequence[int]], num_classes: int) -> np.ndarray:
    """Canonical noise-free image of each class, shape [num_classes, H, W]"""
    if not 2 <= num_classes <= len(BAR_CLASSES):
        raise ConfigError(f"synth_bars supports 2..{len(BAR_CLASSES)} classes, got {num_classes}")
    height, width = _hw(hw)
    thickness = max(1, min(height, width) // 8)
    rows, cols = np.mgrid[0:height, 0:width]
    # diagonals are traced in the unit square so non-square images still get corner-to-corner bars
    u = rows / max(height - 1, 1)
    v = cols / max(width - 1, 1)
    tol = thickness / (2 * max(height, width)) + 1e-9

    shapes: Dict[str, np.ndarray] = {
        "horizontal": np.abs(rows - (height - 1) / 2) < thickness / 2 + 1e-9,
        "vertical": np.abs(cols - (width - 1) / 2) < thickness / 2 + 1e-9,
        "diagonal": np.abs(u - v) <= tol,
        "anti_diagonal": np.abs(u + v - 1) <= tol,
    }
    shapes["cross"] = shapes["horizontal"] | shapes["vertical"]
    shapes["x"] = shapes["diagonal"] | shapes["anti_diagonal"]
    return np.stack([shapes[name] for name in BAR_CLASSES[:num_classes]]).astype(np.float64)


def synth_bars(
    count: int,
    hw: Union[int, Sequence[int]] = 8,
    num_classes: int = 3,
    noise_sigma: float = 0.25,
    seed: int = 7,
    channels: int = 1,
    split: str = "train",
    dtype: np.dtype = np.float32,
) -> Dataset:
    """
    ``count`` images, each one class template plus Gaussian noise, clipped to [0, 1].

    Labels are balanced to within one (class i gets ceil or floor of count / num_classes)
    and shuffled; every draw comes from streams of Rng(seed) named after ``split``.
    """
    if count < 1:
        raise ConfigError("count must be positive")
    if noise_sigma < 0:
        raise ConfigError("noise_sigma must be non-negative")
    templates = bar_templates(hw, num_classes)
    rng = Rng(seed).child(split)

    labels = np.arange(count) % num_classes
    labels = labels[rng.child("labels").permutation(count)]
    images = np.repeat(templates[labels][:, None], channels, axis=1)
    if noise_sigma > 0:
        images = np.clip(images + rng.child("noise").normal(images.shape, std=noise_sigma), 0.0, 1.0)
    return Dataset(images.astype(dtype), labels, num_classes, split, name="synth_bars")
