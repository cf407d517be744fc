"""
Standalone (d, w) sub-networks with dense storage
"""

from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..core.errors import ConfigError, FrozenModelError, ShapeError
from ..model.nested import NestedModel
from ..model.plan import NetworkPlan
from ..numerics import ops
from ..numerics.counter import OpCounter
from ..numerics.tensor import Tensor

NORM_FIELDS = ("gamma", "beta", "running_mean", "running_var")
BUFFER_FIELDS = ("running_mean", "running_var")


@dataclass(frozen=True)
class SliceId:
    """Sub-network with layer groups 1..d and channel groups 1..w"""
    d: int
    w: int

    def __post_init__(self):
        if self.d < 1 or self.w < 1:
            raise ConfigError(f"Slice ({self.d}, {self.w}) must have d >= 1 and w >= 1")

    def __str__(self) -> str:
        return f"({self.d}, {self.w})"


def _per_sample(x: np.ndarray) -> int:
    return x.size // x.shape[0]


class DenseConv:
    """Causal convolution stored as one dense weight block per output group"""

    def __init__(self, name: str, blocks: Sequence[np.ndarray], in_bounds: Sequence[int], stride: int, padding: int):
        self.name = name
        self.blocks = tuple(blocks)
        self.in_bounds = tuple(in_bounds)
        self.stride = stride
        self.padding = padding

    @property
    def out_channels(self) -> int:
        return sum(b.shape[0] for b in self.blocks)

    def forward(self, x: np.ndarray, counter: Optional[OpCounter] = None) -> np.ndarray:
        outs = [
            ops.conv2d_raw(x[:, :self.in_bounds[g]], block, self.stride, self.padding, block.size, counter, self.name)
            for g, block in enumerate(self.blocks)
        ]
        return np.concatenate(outs, axis=1)


class DenseNorm:
    """Frozen per-channel normalization"""

    def __init__(self, name: str, gamma, beta, running_mean, running_var, eps: float):
        self.name = name
        self.gamma, self.beta = gamma, beta
        self.running_mean, self.running_var = running_mean, running_var
        self.eps = eps

    def forward(self, x: np.ndarray) -> np.ndarray:
        return ops.batch_norm_eval_raw(x, self.gamma, self.beta, self.running_mean, self.running_var, self.eps)


class DenseBlock:
    def __init__(self, conv1: DenseConv, bn1: DenseNorm, conv2: DenseConv, bn2: DenseNorm,
                 shortcut: Optional[DenseConv] = None, bn_shortcut: Optional[DenseNorm] = None):
        self.conv1, self.bn1 = conv1, bn1
        self.conv2, self.bn2 = conv2, bn2
        self.shortcut, self.bn_shortcut = shortcut, bn_shortcut

    def forward(self, x: np.ndarray, counter: Optional[OpCounter] = None) -> np.ndarray:
        a1 = self.conv1.forward(x, counter)
        if counter:
            counter.alloc(_per_sample(a1))
        a1 = ops.relu_raw(self.bn1.forward(a1))
        a2 = self.bn2.forward(self.conv2.forward(a1, counter))
        if counter:
            counter.alloc(_per_sample(a2))
            counter.free(_per_sample(a1))
        if self.shortcut is not None:
            s = self.bn_shortcut.forward(self.shortcut.forward(x, counter))
            if counter:
                counter.alloc(_per_sample(s))
                counter.free(_per_sample(x))
                counter.free(_per_sample(s))
        else:
            s = x
            if counter:
                counter.free(_per_sample(x))
        return ops.relu_raw(a2 + s)


class SlicedModel:
    """
    Blocks 1..depth(d) restricted to channel groups 1..w, classified by head (d, w).

    Built from a flat name -> array mapping so that slicing an in-memory model and
    loading a stored slice go through the same constructor. Arrays are read-only.
    """

    def __init__(self, plan: NetworkPlan, slice_id: SliceId, tensors: Dict[str, np.ndarray]):
        plan.check_slice(slice_id.d, slice_id.w)
        self.plan = plan
        self.slice_id = slice_id
        self._tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
        self._used: set = set()
        for name, value in tensors.items():
            array = np.array(value, copy=True)
            array.setflags(write=False)
            self._tensors[name] = array

        w = slice_id.w
        k = plan.kernel_size
        eps = plan.descriptor.bn_eps
        stem_in = plan.input_bounds
        self.input_channels = plan.input_bounds[w - 1]
        self.stem = self._conv("stem.conv", stem_in, plan.stem_bounds, k, 1)
        self.stem_bn = self._norm("stem.bn", plan.stem_bounds[w - 1], eps)

        self.blocks: List[DenseBlock] = []
        for b in plan.blocks[:plan.depth(slice_id.d)]:
            c = b.out_bounds[w - 1]
            shortcut = bn_shortcut = None
            if b.projection:
                shortcut = self._conv(f"{b.name}.shortcut", b.in_bounds, b.out_bounds, 1, b.stride)
                bn_shortcut = self._norm(f"{b.name}.bn_shortcut", c, eps)
            self.blocks.append(DenseBlock(
                self._conv(f"{b.name}.conv1", b.in_bounds, b.out_bounds, k, b.stride),
                self._norm(f"{b.name}.bn1", c, eps),
                self._conv(f"{b.name}.conv2", b.out_bounds, b.out_bounds, k, 1),
                self._norm(f"{b.name}.bn2", c, eps),
                shortcut,
                bn_shortcut,
            ))

        self.head_bounds = plan.head_bounds[slice_id.d - 1][:w]
        classes = plan.descriptor.classes
        self.head_weight = self._take("head.weight", (classes, self.head_bounds[-1]))
        self.head_bias = self._take("head.bias", (classes,))

        unused = set(self._tensors) - self._used
        if unused:
            raise ShapeError(f"Unexpected tensors for slice {slice_id}: {', '.join(sorted(unused)[:5])}")

    def _take(self, name: str, shape: Sequence[int]) -> np.ndarray:
        if name not in self._tensors:
            raise ShapeError(f"Slice {self.slice_id} is missing tensor {name}")
        value = self._tensors[name]
        if value.shape != tuple(shape):
            raise ShapeError(f"{name}: shape {list(value.shape)} != expected {list(shape)}")
        self._used.add(name)
        return value

    def _conv(self, name: str, in_bounds, out_bounds, k: int, stride: int) -> DenseConv:
        blocks = []
        start = 0
        for g in range(self.slice_id.w):
            shape = (out_bounds[g] - start, in_bounds[g], k, k)
            blocks.append(self._take(f"{name}.weight.g{g + 1}", shape))
            start = out_bounds[g]
        return DenseConv(name, blocks, in_bounds[:self.slice_id.w], stride, k // 2)

    def _norm(self, name: str, channels: int, eps: float) -> DenseNorm:
        return DenseNorm(name, *(self._take(f"{name}.{f}", (channels,)) for f in NORM_FIELDS), eps)

    @property
    def descriptor(self):
        return self.plan.descriptor

    @property
    def dtype(self) -> np.dtype:
        return self.head_weight.dtype

    def tensors(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict(self._tensors)

    def num_parameters(self) -> int:
        return sum(v.size for name, v in self._tensors.items() if name.rsplit(".", 1)[-1] not in BUFFER_FIELDS)

    def forward(self, x: np.ndarray, counter: Optional[OpCounter] = None) -> np.ndarray:
        """Logits [B, N]; same kernels and summation order as NestedModel.forward_head"""
        data = np.asarray(x)
        if data.ndim != 4 or data.shape[1] not in (self.descriptor.in_channels, self.input_channels):
            raise ShapeError(f"Input shape {list(data.shape)} incompatible with [B, {self.descriptor.in_channels}, H, W]")
        data = data.astype(self.dtype, copy=False)[:, :self.input_channels]

        if counter:
            counter.alloc(_per_sample(data))
        h = self.stem.forward(data, counter)
        if counter:
            counter.alloc(_per_sample(h))
            counter.free(_per_sample(data))
        h = ops.relu_raw(self.stem_bn.forward(h))
        for block in self.blocks:
            h = block.forward(h, counter)

        features = ops.global_avg_pool_raw(h)
        if counter:
            counter.alloc(_per_sample(features))
            counter.free(_per_sample(h))
        logits = ops.cumulative_logits_raw(features, self.head_weight, self.head_bias, self.head_bounds, counter)[-1]
        if counter:
            counter.alloc(_per_sample(logits))
            counter.free(_per_sample(features))
        return logits

    __call__ = forward


def slice_tensors(model: NestedModel, slice_id: SliceId) -> "OrderedDict[str, np.ndarray]":
    """Dense copies of every weight slice (d, w) needs; masked storage is never read"""
    d, w = slice_id.d, slice_id.w
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    blocks = model.blocks[:model.plan.depth(d)]
    layers = [model.stem] + [layer for block in blocks for layer in block.layers()]
    norms = [model.stem_bn] + [norm for block in blocks for norm in block.norms()]

    for layer in layers:
        for g, block in enumerate(layer.group_blocks(w)):
            tensors[f"{layer.name}.weight.g{g + 1}"] = block
    for layer, norm in zip(layers, norms):
        c = layer.out_bounds[w - 1]
        for field_name in NORM_FIELDS:
            value = getattr(norm, field_name)
            tensors[f"{norm.name}.{field_name}"] = (value.data if isinstance(value, Tensor) else value)[:c].copy()

    head = model.heads[d - 1]
    tensors["head.weight"] = head.weight.data[:, :head.bounds[w - 1]].copy()
    tensors["head.bias"] = head.bias.data.copy()
    return tensors


def slice_model(model: NestedModel, slice_id: SliceId) -> SlicedModel:
    """Extract slice (d, w) of a frozen model"""
    if not model.frozen:
        raise FrozenModelError("Slicing needs a frozen model; call freeze() after training")
    model.plan.check_slice(slice_id.d, slice_id.w)
    return SlicedModel(model.plan, slice_id, slice_tensors(model, slice_id))
