"""
Per-head cross-entropy grid and the λ-weighted aggregate
"""

from typing import Union

import numpy as np

from ..model.nested import LogitsGrid
from ..numerics import ops
from ..numerics.tensor import Tensor
from .weights import LossWeightMatrix


def head_loss(grid: LogitsGrid, labels: np.ndarray) -> Tensor:
    """Batch-mean cross-entropy of every head, shape [L, C]"""
    return ops.stack([ops.head_losses(layer, labels) for layer in grid.layers])


def aggregate_loss(loss_grid: Union[Tensor, np.ndarray], weights: Union[LossWeightMatrix, np.ndarray]) -> Tensor:
    """Σ λ·loss / Σ λ; the gradient hands each head λ/Σλ"""
    if not isinstance(loss_grid, Tensor):
        loss_grid = Tensor(np.asarray(loss_grid, dtype=np.float64))
    values = weights.values if isinstance(weights, LossWeightMatrix) else np.asarray(weights)
    return ops.weighted_mean(loss_grid, values)
