"""
Joint training of every head with SGD and momentum
"""

from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from ..core.config import TrainConfig
from ..core.errors import ConfigError, TrainingDivergedError
from ..data.dataset import Dataset, batches
from ..model.nested import NestedModel
from ..numerics.tensor import Parameter, backward
from ..utils.logging import get_logger
from .evaluate import evaluate
from .losses import aggregate_loss, head_loss
from .metrics import EvalRecord, MetricsLog
from .weights import LossWeightMatrix

logger = get_logger(__name__)

StepCallback = Callable[[int, float], None]


class SGDMomentum:
    """v <- mu*v + g (+ wd*w on unmasked positions); w <- w - lr*v"""

    def __init__(self, params: Dict[str, Parameter], momentum: float = 0.9, weight_decay: float = 0.0,
                 masks: Optional[Dict[str, np.ndarray]] = None):
        self.params = params
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.masks = masks or {}
        self.velocity = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self, lr: float) -> None:
        for name, p in self.params.items():
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            if self.weight_decay:
                decay = self.weight_decay * p.data
                if name in self.masks:
                    decay = np.where(self.masks[name], decay, 0).astype(p.dtype)
                grad = grad + decay
            v = self.velocity[name]
            v *= self.momentum
            v += grad
            p.data -= lr * v


@dataclass
class TrainResult:
    model: NestedModel
    metrics: MetricsLog
    steps: int
    final_loss: float


def _diagnostics(model: NestedModel, losses: np.ndarray, lr: float) -> Dict[str, object]:
    non_finite = [name for name, p in model.named_parameters().items() if not np.isfinite(p.data).all()]
    return {
        'learning_rate': lr,
        'non_finite_heads': [tuple(int(i) + 1 for i in idx) for idx in np.argwhere(~np.isfinite(losses))],
        'non_finite_parameters': non_finite[:10],
    }


def train(
    model: NestedModel,
    dataset: Dataset,
    config: TrainConfig,
    weights: LossWeightMatrix,
    eval_data: Optional[Dataset] = None,
    flip: bool = False,
    crop_pad: int = 0,
    callback: Optional[StepCallback] = None,
) -> TrainResult:
    """
    Minimize the λ-weighted aggregate of all L x C head losses.

    Batches come from batches(dataset, seed, epoch), so a run is a pure function
    of (model init, data, config). Evaluation on ``eval_data`` (default: the
    training set) happens every ``eval_every`` steps and always after the last one.
    """
    config.validate()
    if weights.shape != (model.L, model.C):
        raise ConfigError(f"Loss weights are {weights.shape[0]}x{weights.shape[1]}, model grid is {model.L}x{model.C}")
    evaluation_set = eval_data if eval_data is not None else dataset
    log = MetricsLog(weights=weights.describe())
    optimizer = SGDMomentum(model.named_parameters(), config.momentum, config.weight_decay, model.masks())

    def record(step: int, lr: float) -> None:
        result = evaluate(model, evaluation_set, weights)
        log.add(EvalRecord(step, result.accuracy, result.loss, result.aggregate, lr))
        logger.info("step %d: eval aggregate loss %.4f, full-head accuracy %.3f",
                    step, result.aggregate, result.accuracy[-1, -1])

    logger.info("Training %dx%d heads for %d steps (batch %d, lambda %s)",
                model.L, model.C, config.steps, config.batch_size, weights.describe())
    step = 0
    epoch = 0
    value = float("nan")
    while step < config.steps:
        for images, labels in batches(dataset, config.batch_size, config.seed, epoch, flip, crop_pad):
            if step >= config.steps:
                break
            lr = config.lr_at(step)
            model.zero_grad()
            losses = head_loss(model.forward_grid(images, training=True), labels)
            loss = aggregate_loss(losses, weights)
            value = float(loss.data)
            if not np.isfinite(value):
                diagnostics = _diagnostics(model, losses.data, lr)
                logger.error("Training diverged at step %d: %s", step, diagnostics)
                raise TrainingDivergedError(step, diagnostics)
            backward(loss)
            optimizer.step(lr)
            step += 1
            log.train_losses.append(value)

            if config.log_every and step % config.log_every == 0:
                logger.info("step %d: loss %.4f lr %g", step, value, lr)
            if config.eval_every and step % config.eval_every == 0 and step < config.steps:
                record(step, lr)
            if callback is not None:
                callback(step, value)
        epoch += 1

    model.zero_grad()
    record(step, config.lr_at(max(step - 1, 0)))
    return TrainResult(model, log, step, value)
