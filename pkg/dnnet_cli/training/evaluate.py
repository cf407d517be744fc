"""
Accuracy and loss of every head over a dataset
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from ..data.dataset import Dataset, sequential_batches
from ..model.nested import NestedModel
from ..numerics import ops
from ..numerics.tensor import Tensor
from .weights import LossWeightMatrix


@dataclass
class GridEvaluation:
    accuracy: np.ndarray
    loss: np.ndarray
    count: int
    aggregate: float = float("nan")


def _evaluate_shard(model: NestedModel, images: np.ndarray, labels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    values = model.forward_grid(images).values
    correct = (values.argmax(axis=-1) == labels[None, None, :]).sum(axis=-1)
    loss_sum = np.stack([
        ops.head_losses(Tensor(layer), labels).data.astype(np.float64) * len(labels) for layer in values
    ])
    return correct.astype(np.int64), loss_sum


def evaluate(
    model: NestedModel,
    dataset: Dataset,
    weights: Optional[LossWeightMatrix] = None,
    batch_size: int = 256,
    workers: int = 1,
) -> GridEvaluation:
    """
    Eval-mode pass over the whole dataset. Shards are fixed by ``batch_size`` and
    reduced in dataset order, so the result does not depend on ``workers``.
    """
    shards = list(sequential_batches(dataset, batch_size))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: _evaluate_shard(model, s[1], s[2]), shards))
    else:
        results = [_evaluate_shard(model, images, labels) for _, images, labels in shards]

    correct = np.zeros((model.L, model.C), dtype=np.int64)
    loss_sum = np.zeros((model.L, model.C))
    for shard_correct, shard_loss in results:
        correct += shard_correct
        loss_sum += shard_loss

    accuracy = correct / dataset.count
    loss = loss_sum / dataset.count
    aggregate = float("nan")
    if weights is not None:
        aggregate = float((weights.values * loss).sum() / weights.values.sum())
    return GridEvaluation(accuracy, loss, dataset.count, aggregate)


def evaluate_grid(model: NestedModel, dataset: Dataset, batch_size: int = 256, workers: int = 1) -> np.ndarray:
    """Top-1 accuracy of every head, [L, C]"""
    return evaluate(model, dataset, batch_size=batch_size, workers=workers).accuracy


def width_curve(model: NestedModel, dataset: Dataset, batch_size: int = 256, workers: int = 1,
                accuracy: Optional[np.ndarray] = None) -> pd.DataFrame:
    """Full-depth accuracy against the number of channel groups kept"""
    if accuracy is None:
        accuracy = evaluate_grid(model, dataset, batch_size, workers)
    spec = model.group_spec
    last_stage = spec.num_stages - 1
    return pd.DataFrame({
        'w': np.arange(1, model.C + 1),
        'channels': [spec.retained(last_stage, c) for c in range(1, model.C + 1)],
        'accuracy': accuracy[-1],
    })
