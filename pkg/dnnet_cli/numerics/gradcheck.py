"""
Central finite-difference check of analytic gradients
"""

from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import ops
from .rng import Rng
from .tensor import Precision, Tensor, backward, no_grad

if TYPE_CHECKING:
    from ..model.nested import NestedModel


@dataclass
class GradMismatch:
    name: str
    index: Tuple[int, ...]
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    """Outcome of one finite-difference sweep"""
    epsilon: float
    tolerance: float
    checked: int = 0
    skipped_kinks: int = 0
    max_rel_error: float = 0.0
    worst: Optional[str] = None
    failures: List[GradMismatch] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def record(self, name: str, index: Tuple[int, ...], analytic: float, numeric: float, rel: float) -> None:
        self.checked += 1
        if rel > self.max_rel_error:
            self.max_rel_error = rel
            self.worst = f"{name}{list(index)}"
        if rel > self.tolerance:
            self.failures.append(GradMismatch(name, index, analytic, numeric, rel))

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['passed'] = self.passed
        return data


def grid_loss(model: "NestedModel", x: np.ndarray, labels: np.ndarray, weights: np.ndarray) -> Tensor:
    """λ-weighted aggregate loss of a training-mode forward pass"""
    grid = model.forward_grid(x, training=True)
    losses = ops.stack([ops.head_losses(t, labels) for t in grid.layers])
    return ops.weighted_mean(losses, weights)


def analytic_gradients(model: "NestedModel", x: np.ndarray, labels: np.ndarray,
                       weights: np.ndarray) -> Dict[str, np.ndarray]:
    """Backprop gradients on a clone, so running statistics of ``model`` stay untouched"""
    work = model.clone().unfreeze()
    backward(grid_loss(work, x, labels, weights))
    return {
        name: (p.grad if p.grad is not None else np.zeros_like(p.data))
        for name, p in work.named_parameters().items()
    }


def _patterns_equal(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(p, q) for p, q in zip(a, b))


def _candidate_positions(model: "NestedModel", names: Optional[Sequence[str]]) -> List[Tuple[str, int]]:
    masks = model.masks()
    params = model.named_parameters()
    positions = []
    for name in (params if names is None else names):
        p = params[name]
        if name in masks:
            flat = np.flatnonzero(masks[name])
        else:
            flat = np.arange(p.size)
        positions.extend((name, int(i)) for i in flat)
    return positions


def fd_gradient_check(
    model: "NestedModel",
    x: np.ndarray,
    labels: np.ndarray,
    weights: Optional[np.ndarray] = None,
    epsilon: float = 1e-5,
    tolerance: Optional[float] = None,
    samples: Optional[int] = 64,
    seed: int = 0,
    floor: float = 1e-4,
    names: Optional[Sequence[str]] = None,
    analytic: Optional[Dict[str, np.ndarray]] = None,
) -> GradCheckReport:
    """
    Compare analytic gradients of the aggregate loss against central differences.

    Numeric gradients are always taken on a 64-bit copy of the model, so a 32-bit
    model is judged against 64-bit differences. Samples whose +/- epsilon step flips
    any relu on/off pattern are skipped and counted in ``skipped_kinks``.
    Relative error is |a - n| / max(|a|, |n|, floor). Masked weight positions are
    never sampled.
    """
    if tolerance is None:
        tolerance = 1e-6 if model.precision is Precision.FLOAT64 else 1e-3
    report = GradCheckReport(epsilon=epsilon, tolerance=tolerance)
    if weights is None:
        weights = np.ones((model.L, model.C))

    positions = _candidate_positions(model, names)
    if not positions:
        return report
    if samples is not None and samples < len(positions):
        picks = np.sort(Rng(seed).child("gradcheck").choice(len(positions), samples))
        positions = [positions[i] for i in picks]

    if analytic is None:
        analytic = analytic_gradients(model, x, labels, weights)

    reference = model.astype(Precision.FLOAT64).unfreeze()
    params = reference.named_parameters()
    x64 = np.asarray(x, dtype=np.float64)
    weights64 = np.asarray(weights, dtype=np.float64)

    with no_grad(), ops.relu_patterns() as base:
        grid_loss(reference, x64, labels, weights64)

    for name, flat in positions:
        p = params[name]
        index = np.unravel_index(flat, p.shape)
        original = p.data[index]
        losses = []
        kink = False
        for sign in (1.0, -1.0):
            p.data[index] = original + sign * epsilon
            with no_grad(), ops.relu_patterns() as seen:
                losses.append(float(grid_loss(reference, x64, labels, weights64).data))
            kink = kink or not _patterns_equal(base, seen)
        p.data[index] = original
        if kink:
            report.skipped_kinks += 1
            continue

        numeric = (losses[0] - losses[1]) / (2 * epsilon)
        a = float(analytic[name][index])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
        report.record(name, tuple(int(i) for i in index), a, numeric, rel)

    return report
