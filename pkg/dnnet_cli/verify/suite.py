"""
Invariant checks run by `dnnet verify`
"""

from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..core.errors import VerificationError
from ..model.groups import build_mask, shared_input_mask
from ..model.nested import NestedModel
from ..numerics.counter import OpCounter
from ..numerics.gradcheck import fd_gradient_check
from ..numerics.rng import Rng
from ..numerics.tensor import Precision
from ..slicing.cost import cost, cost_table
from ..slicing.selector import Budget, select_slice
from ..slicing.sliced import SliceId, slice_model
from ..training.weights import descend
from ..utils.logging import get_logger

logger = get_logger(__name__)

CHECKS = ("mask_structure", "causality", "slice_equivalence", "gradients", "cost_oracle", "selector_oracle")

Progress = Callable[[str], None]


@dataclass
class CheckResult:
    """Outcome of one invariant check; ``measured`` is its worst observed deviation"""
    name: str
    passed: bool
    measured: float = 0.0
    detail: str = ""

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class VerificationReport:
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def get(self, name: str) -> CheckResult:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([c.to_dict() for c in self.checks], columns=["name", "passed", "measured", "detail"])

    def raise_for_failures(self) -> None:
        if not self.passed:
            names = ", ".join(c.name for c in self.failures)
            raise VerificationError(f"{len(self.failures)} check(s) failed: {names}")


def probe_inputs(model: NestedModel, count: int, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Random images in [0, 1] and labels shaped for ``model``"""
    arch = model.descriptor
    rng = Rng(seed).child("verify")
    x = rng.child("images").uniform((count, arch.in_channels, *arch.input_hw), dtype=model.dtype)
    labels = rng.child("labels").integers(0, arch.classes, size=(count,))
    return x, labels


def check_mask_structure(model: NestedModel) -> CheckResult:
    """Every conv mask is the block-lower-triangular pattern its channel bounds imply"""
    bad = []
    for layer in model.causal_layers():
        if layer.shared_input:
            expected = shared_input_mask(layer.in_bounds[-1], layer.out_bounds[-1], layer.kernel.kernel_size)
        else:
            expected = build_mask(layer.in_bounds, layer.out_bounds, layer.kernel.kernel_size)
        if not np.array_equal(layer.kernel.mask, expected):
            bad.append(layer.name)
    detail = f"{len(model.causal_layers())} layers" if not bad else f"wrong masks: {', '.join(bad)}"
    return CheckResult("mask_structure", not bad, float(len(bad)), detail)


def _perturb_outside(model: NestedModel, d: int, w: int, rng: Rng) -> NestedModel:
    twin = model.clone()
    cone = twin.cone_masks(d, w)
    for name, p in twin.named_parameters().items():
        outside = ~cone[name]
        noise = rng.child(name).normal(p.shape, dtype=np.float64)
        p.data[outside] += noise[outside].astype(p.dtype)
    for name, buf in twin.named_buffers().items():
        outside = ~cone[name]
        noise = np.abs(rng.child(name).normal(buf.shape, dtype=np.float64)).astype(buf.dtype)
        if name.endswith("running_var"):
            buf[outside] *= 1 + noise[outside]
        else:
            buf[outside] += noise[outside]
    return twin


def check_causality(model: NestedModel, x: np.ndarray, seed: int = 0,
                    slices: Optional[Sequence[Tuple[int, int]]] = None) -> CheckResult:
    """
    For each (d, w): perturb input channels beyond group w and every parameter
    and statistic outside the cone of heads l <= d, c <= w; those heads must not move.
    """
    base = model.forward_grid(x).values
    rng = Rng(seed).child("causality")
    worst = 0.0
    broken = []
    for d, w in slices or list(model.iter_heads()):
        cell = rng.child(f"{d},{w}")
        twin = _perturb_outside(model, d, w, cell)
        data = np.array(x, copy=True)
        keep = model.input_bounds[w - 1]
        if keep < data.shape[1]:
            data[:, keep:] += cell.child("input").normal(data[:, keep:].shape, dtype=data.dtype)
        moved = twin.forward_grid(data).values[:d, :w]
        diff = float(np.max(np.abs(moved.astype(np.float64) - base[:d, :w])))
        worst = max(worst, diff)
        if not np.array_equal(moved, base[:d, :w]):
            broken.append(f"({d}, {w})")
    detail = "all cones isolated" if not broken else f"leaks into cones {', '.join(broken[:8])}"
    return CheckResult("causality", not broken, worst, detail)


def check_slice_equivalence(model: NestedModel, x: np.ndarray) -> CheckResult:
    """Every standalone slice reproduces its head of the full model bit for bit"""
    frozen = model if model.frozen else model.clone().freeze()
    worst = 0.0
    broken = []
    for d, w in frozen.iter_heads():
        sliced = slice_model(frozen, SliceId(d, w))
        expected = frozen.forward_head(x, d, w)
        got = sliced.forward(x)
        worst = max(worst, float(np.max(np.abs(got.astype(np.float64) - expected))))
        if not np.array_equal(got, expected):
            broken.append(f"({d}, {w})")
    detail = f"{frozen.L * frozen.C} slices x {len(x)} inputs" if not broken else f"differs at {', '.join(broken[:8])}"
    return CheckResult("slice_equivalence", not broken, worst, detail)


def check_gradients(model: NestedModel, x: np.ndarray, labels: np.ndarray, samples: int = 64,
                    seed: int = 0, gamma: float = 2.0) -> CheckResult:
    """Central differences on a 64-bit copy, descend loss weights"""
    model64 = model.astype(Precision.FLOAT64)
    weights = descend(model.L, model.C, gamma).values
    report = fd_gradient_check(model64, x.astype(np.float64), labels, weights, samples=samples, seed=seed)
    detail = f"{report.checked} sampled, {report.skipped_kinks} skipped at relu kinks"
    if report.worst:
        detail += f", worst {report.worst}"
    passed = report.passed and report.checked > 0
    return CheckResult("gradients", passed, report.max_rel_error, detail)


def _brute_force_params(model: NestedModel, d: int, w: int) -> int:
    """Nonzero mask positions in the retained block plus norm and head scalars"""
    blocks = model.blocks[:model.plan.depth(d)]
    layers = [model.stem] + [layer for block in blocks for layer in block.layers()]
    total = 0
    for layer in layers:
        out_ch, in_ch = layer.out_bounds[w - 1], layer.in_bounds[w - 1]
        total += int(layer.kernel.mask[:out_ch, :in_ch].sum()) + 2 * out_ch
    head = model.heads[d - 1]
    return total + head.classes * head.bounds[w - 1] + head.classes


def check_cost_oracle(model: NestedModel, x: np.ndarray) -> CheckResult:
    """Closed-form costs against instrumented execution and brute-force counts, plus monotonicity"""
    frozen = model if model.frozen else model.clone().freeze()
    hw = x.shape[2:]
    problems = []
    for d, w in frozen.iter_heads():
        analytic = cost(frozen.plan, SliceId(d, w), hw)
        sliced = slice_model(frozen, SliceId(d, w))
        via_slice, via_head = OpCounter(), OpCounter()
        sliced.forward(x[:1], via_slice)
        frozen.forward_head(x[:1], d, w, via_head)
        observed = {
            'macs': (via_slice.macs, via_head.macs),
            'peak_activation': (via_slice.peak_activation, via_head.peak_activation),
            'params': (sliced.num_parameters(), _brute_force_params(frozen, d, w)),
        }
        for metric, values in observed.items():
            if any(v != getattr(analytic, metric) for v in values):
                problems.append(f"({d}, {w}) {metric}")

    table = cost_table(frozen.plan, hw)
    for metric in ("params", "macs", "peak_activation"):
        values = table.metric(metric)
        if (np.diff(values, axis=0) < 0).any() or (np.diff(values, axis=1) < 0).any():
            problems.append(f"{metric} not monotone")
    detail = "exact on every slice" if not problems else "; ".join(problems[:8])
    return CheckResult("cost_oracle", not problems, float(len(problems)), detail)


def exhaustive_select(costs, scores: np.ndarray, budget: Budget) -> Optional[SliceId]:
    """Reference selector: scan every cell, keep the best key"""
    best, best_key = None, None
    L, C = costs.shape
    for d in range(1, L + 1):
        for w in range(1, C + 1):
            c = costs.at(d, w)
            if not budget.feasible(c):
                continue
            key = (-float(scores[d - 1, w - 1]), c.macs, c.params, d, w)
            if best_key is None or key < best_key:
                best, best_key = SliceId(d, w), key
    return best


def random_budget(costs, rng: Rng) -> Budget:
    """Each bound is unbounded or drawn around the range of its metric (sometimes below all of it)"""
    limits = {}
    for field_name, metric in (("max_macs", "macs"), ("max_params", "params"),
                               ("max_peak_activation", "peak_activation")):
        values = costs.metric(metric)
        pick = rng.child(field_name)
        if pick.uniform((1,))[0] < 0.3:
            limits[field_name] = None
        else:
            limits[field_name] = int(pick.integers(max(int(values.min()) - 10, 0), int(values.max()) + 1))
    return Budget(**limits)


def check_selector(costs, draws: int = 1000, seed: int = 0) -> CheckResult:
    """select_slice against an exhaustive scan on random score tables and budgets, ties included"""
    rng = Rng(seed).child("selector")
    mismatches = 0
    infeasible = 0
    for i in range(draws):
        draw = rng.child(str(i))
        # few distinct values so score ties are common
        scores = draw.child("scores").integers(0, 4, size=costs.shape).astype(np.float64)
        budget = random_budget(costs, draw)
        expected = exhaustive_select(costs, scores, budget)
        if expected is None:
            infeasible += 1
        if select_slice(costs, scores, budget) != expected:
            mismatches += 1
    detail = f"{draws} draws ({infeasible} infeasible)"
    if mismatches:
        detail += f", {mismatches} mismatches"
    return CheckResult("selector_oracle", mismatches == 0, float(mismatches), detail)


def run_suite(
    model: NestedModel,
    inputs: int = 100,
    grad_samples: int = 64,
    selector_draws: int = 1000,
    seed: int = 0,
    progress: Optional[Progress] = None,
) -> VerificationReport:
    """Run every check against ``model`` and collect the results"""
    x, labels = probe_inputs(model, inputs, seed)
    grad_x, grad_labels = x[:4], labels[:4]
    costs = cost_table(model.plan, x.shape[2:])
    steps = {
        "mask_structure": lambda: check_mask_structure(model),
        "causality": lambda: check_causality(model, x[:8], seed),
        "slice_equivalence": lambda: check_slice_equivalence(model, x),
        "gradients": lambda: check_gradients(model, grad_x, grad_labels, grad_samples, seed),
        "cost_oracle": lambda: check_cost_oracle(model, x),
        "selector_oracle": lambda: check_selector(costs, selector_draws, seed),
    }
    report = VerificationReport()
    for name in CHECKS:
        if progress is not None:
            progress(name)
        result = steps[name]()
        level = logger.info if result.passed else logger.warning
        level("check %s: %s (%g) %s", name, "pass" if result.passed else "FAIL", result.measured, result.detail)
        report.checks.append(result)
    return report
