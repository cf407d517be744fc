"""
Loss weights, losses, training loop and evaluation of the head grid
"""

from .evaluate import GridEvaluation, evaluate, evaluate_grid, width_curve
from .losses import aggregate_loss, head_loss
from .metrics import EvalRecord, MetricsLog
from .trainer import SGDMomentum, TrainResult, train
from .weights import LossWeightMatrix, make_weights, single_pick, weights_from_config

__all__ = [
    "GridEvaluation",
    "evaluate",
    "evaluate_grid",
    "width_curve",
    "aggregate_loss",
    "head_loss",
    "EvalRecord",
    "MetricsLog",
    "SGDMomentum",
    "TrainResult",
    "train",
    "LossWeightMatrix",
    "make_weights",
    "single_pick",
    "weights_from_config",
]
