"""
Closed-form cost of every slice: parameters, MACs and peak activation memory
"""

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..core.config import ArchDescriptor
from ..core.errors import DataError
from ..model.groups import GroupSpec, masked_position_count
from ..model.plan import NetworkPlan, output_size
from ..numerics.counter import OpCounter
from .sliced import SliceId

METRICS = ("params", "macs", "peak_activation")


@dataclass(frozen=True)
class SliceCost:
    """Per-sample cost of one slice at a reference input size"""
    params: int
    macs: int
    peak_activation: int

    def to_dict(self) -> Dict[str, int]:
        return asdict(self)


def _plan(descriptor: Union[ArchDescriptor, NetworkPlan], group_spec: Optional[GroupSpec]) -> NetworkPlan:
    if isinstance(descriptor, NetworkPlan):
        return descriptor
    return NetworkPlan.build(descriptor, group_spec)


def cost(
    descriptor: Union[ArchDescriptor, NetworkPlan],
    slice_id: SliceId,
    input_hw: Optional[Sequence[int]] = None,
    group_spec: Optional[GroupSpec] = None,
) -> SliceCost:
    """
    Walks the slice layer by layer, counting only unmasked weight positions in
    the retained groups, and replays the inference allocation order (each
    activation freed as soon as its last reader has run) to get the peak.
    """
    plan = _plan(descriptor, group_spec)
    d, w = slice_id.d, slice_id.w
    plan.check_slice(d, w)
    arch = plan.descriptor
    height, width = input_hw if input_hw is not None else arch.input_hw
    k = plan.kernel_size
    counter = OpCounter()
    params = 0

    def conv(in_bounds, out_bounds, kernel: int, h: int, wd: int, stride: int):
        nonlocal params
        positions = masked_position_count(in_bounds, out_bounds, kernel, w)
        ho = output_size(h, kernel, stride, kernel // 2)
        wo = output_size(wd, kernel, stride, kernel // 2)
        counter.add_macs(positions * ho * wo)
        params += positions + 2 * out_bounds[w - 1]
        return out_bounds[w - 1] * ho * wo, ho, wo

    image = plan.input_bounds[w - 1] * height * width
    counter.alloc(image)
    h, ho, wo = conv(plan.input_bounds, plan.stem_bounds, k, height, width, 1)
    h_hw = (ho, wo)
    counter.alloc(h)
    counter.free(image)

    for b in plan.blocks[:plan.depth(d)]:
        a1, ho, wo = conv(b.in_bounds, b.out_bounds, k, h_hw[0], h_hw[1], b.stride)
        counter.alloc(a1)
        a2, _, _ = conv(b.out_bounds, b.out_bounds, k, ho, wo, 1)
        counter.alloc(a2)
        counter.free(a1)
        if b.projection:
            s, _, _ = conv(b.in_bounds, b.out_bounds, 1, h_hw[0], h_hw[1], b.stride)
            counter.alloc(s)
            counter.free(h)
            counter.free(s)
        else:
            counter.free(h)
        h, h_hw = a2, (ho, wo)

    channels = plan.head_bounds[d - 1][w - 1]
    classes = arch.classes
    counter.alloc(channels)
    counter.free(h)
    counter.add_macs(channels * classes)
    params += channels * classes + classes
    counter.alloc(classes)
    counter.free(channels)
    return SliceCost(params, counter.macs, counter.peak_activation)


@dataclass
class CostTable:
    """L x C arrays of every cost metric"""
    params: np.ndarray
    macs: np.ndarray
    peak_activation: np.ndarray

    @property
    def shape(self):
        return self.macs.shape

    def at(self, d: int, w: int) -> SliceCost:
        return SliceCost(int(self.params[d - 1, w - 1]), int(self.macs[d - 1, w - 1]),
                         int(self.peak_activation[d - 1, w - 1]))

    def metric(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def distinct_points(self) -> int:
        """Distinct (macs, peak_activation) pairs offered by the grid"""
        pairs = np.stack([self.macs.ravel(), self.peak_activation.ravel()], axis=1)
        return len(np.unique(pairs, axis=0))

    def to_frame(self) -> pd.DataFrame:
        """One L x C block per metric: columns metric, d, w1..wC"""
        L, C = self.shape
        frames = []
        for name in METRICS:
            frame = pd.DataFrame(self.metric(name), columns=[f"w{c + 1}" for c in range(C)])
            frame.insert(0, "d", np.arange(1, L + 1))
            frame.insert(0, "metric", name)
            frames.append(frame)
        return pd.concat(frames, ignore_index=True)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path).expanduser()
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "CostTable":
        path = Path(path).expanduser()
        if not path.is_file():
            raise DataError(f"Cost table not found: {path}")
        try:
            frame = pd.read_csv(path)
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise DataError(f"Cannot parse cost table {path}: {e}")
        if list(frame.columns[:2]) != ["metric", "d"]:
            raise DataError(f"Cost table {path} must start with columns metric, d")
        arrays = {}
        for name in METRICS:
            block = frame[frame["metric"] == name].sort_values("d")
            if block.empty:
                raise DataError(f"Cost table {path} has no '{name}' rows")
            values = block.drop(columns=["metric", "d"]).to_numpy()
            if np.isnan(values.astype(np.float64)).any():
                raise DataError(f"Cost table {path} has empty cells in '{name}'")
            arrays[name] = values.astype(np.int64)
        shapes = {a.shape for a in arrays.values()}
        if len(shapes) != 1:
            raise DataError(f"Cost table {path}: metric blocks differ in shape {sorted(shapes)}")
        return cls(**arrays)


def cost_table(
    descriptor: Union[ArchDescriptor, NetworkPlan],
    input_hw: Optional[Sequence[int]] = None,
    group_spec: Optional[GroupSpec] = None,
) -> CostTable:
    plan = _plan(descriptor, group_spec)
    shape = (plan.L, plan.C)
    arrays = {name: np.zeros(shape, dtype=np.int64) for name in METRICS}
    for d in range(1, plan.L + 1):
        for w in range(1, plan.C + 1):
            c = cost(plan, SliceId(d, w), input_hw)
            for name in METRICS:
                arrays[name][d - 1, w - 1] = getattr(c, name)
    return CostTable(**arrays)
