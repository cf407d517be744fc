"""
Building blocks of the nested network

Every layer offers two paths:
  forward(x: Tensor, training)            graph-recording pass over all channels
  infer(x: ndarray, groups, counter)      inference restricted to channel groups 1..groups
Both use the raw kernels from numerics.ops, so the restricted path reproduces
the full one exactly for the channels it keeps.
"""

from enum import Enum
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import ShapeError
from ..numerics import ops
from ..numerics.counter import OpCounter
from ..numerics.rng import Rng
from ..numerics.tensor import Parameter, Tensor
from .groups import build_mask, group_index, shared_input_mask


class LayerKind(Enum):
    """Role of a causal convolution"""
    STEM = "stem"
    CONV = "conv"
    PROJECTION = "projection_shortcut"


def _per_sample(x: np.ndarray) -> int:
    return x.size // x.shape[0]


class CausalLayer:
    """Channel-causal convolution: output group g only reads input groups 1..g"""

    def __init__(
        self,
        name: str,
        in_bounds: Sequence[int],
        out_bounds: Sequence[int],
        kernel_size: int,
        stride: int,
        kind: LayerKind,
        rng: Rng,
        dtype: np.dtype,
        shared_input: bool = False,
    ):
        self.name = name
        self.kind = kind
        self.out_bounds = tuple(out_bounds)
        # a shared input is visible to every group in full
        self.in_bounds = tuple([in_bounds[-1]] * len(out_bounds)) if shared_input else tuple(in_bounds)
        self.shared_input = shared_input
        if shared_input:
            mask = shared_input_mask(in_bounds[-1], out_bounds[-1], kernel_size)
        else:
            mask = build_mask(in_bounds, out_bounds, kernel_size)

        # He init over the unmasked fan-in of each output channel
        fan_in = mask.reshape(mask.shape[0], -1).sum(axis=1).astype(np.float64)
        std = np.sqrt(2.0 / fan_in)[:, None, None, None]
        weight = rng.normal(mask.shape, dtype=np.float64) * std * mask
        self.kernel = ops.MaskedConvKernel(
            Parameter(weight.astype(dtype), name=f"{name}.weight"), mask, stride, kernel_size // 2
        )

    @property
    def weight(self) -> Parameter:
        return self.kernel.weight

    def parameters(self) -> Iterator[Parameter]:
        yield self.kernel.weight

    def forward(self, x: Tensor, counter: Optional[OpCounter] = None) -> Tensor:
        return ops.conv2d_masked(x, self.kernel, counter, self.name)

    def infer(self, x: np.ndarray, groups: int, counter: Optional[OpCounter] = None) -> np.ndarray:
        out_ch = self.out_bounds[groups - 1]
        in_ch = self.in_bounds[groups - 1]
        if x.shape[1] != in_ch:
            raise ShapeError(f"{self.name}: expected {in_ch} input channels for {groups} groups, got {x.shape[1]}")
        mask = self.kernel.mask[:out_ch, :in_ch]
        w = self.kernel.effective()[:out_ch, :in_ch]
        return ops.conv2d_raw(x, w, self.kernel.stride, self.kernel.padding, int(mask.sum()), counter, self.name)

    def group_blocks(self, groups: int) -> List[np.ndarray]:
        """Dense weight block of each output group 1..groups (masked storage dropped)"""
        blocks = []
        start = 0
        w = self.kernel.weight.data
        for g in range(groups):
            blocks.append(w[start:self.out_bounds[g], :self.in_bounds[g]].copy())
            start = self.out_bounds[g]
        return blocks


class BatchNorm:
    """Per-channel batch normalization with running statistics"""

    def __init__(self, name: str, channels: int, dtype: np.dtype, momentum: float = 0.1, eps: float = 1e-5):
        self.name = name
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(np.ones(channels, dtype=dtype), name=f"{name}.gamma")
        self.beta = Parameter(np.zeros(channels, dtype=dtype), name=f"{name}.beta")
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def parameters(self) -> Iterator[Parameter]:
        yield self.gamma
        yield self.beta

    def buffers(self) -> Iterator[Tuple[str, np.ndarray]]:
        yield f"{self.name}.running_mean", self.running_mean
        yield f"{self.name}.running_var", self.running_var

    def forward(self, x: Tensor, training: bool) -> Tensor:
        return ops.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                              training, self.momentum, self.eps)

    def infer(self, x: np.ndarray) -> np.ndarray:
        c = x.shape[1]
        return ops.batch_norm_eval_raw(x, self.gamma.data[:c], self.beta.data[:c],
                                       self.running_mean[:c], self.running_var[:c], self.eps)


class ResidualBlock:
    """conv-bn-relu-conv-bn plus identity or causal projection shortcut, then relu"""

    def __init__(
        self,
        name: str,
        in_bounds: Sequence[int],
        out_bounds: Sequence[int],
        kernel_size: int,
        stride: int,
        rng: Rng,
        dtype: np.dtype,
        bn_momentum: float = 0.1,
        bn_eps: float = 1e-5,
    ):
        self.name = name
        self.in_bounds = tuple(in_bounds)
        self.out_bounds = tuple(out_bounds)
        self.stride = stride
        self.conv1 = CausalLayer(f"{name}.conv1", in_bounds, out_bounds, kernel_size, stride,
                                 LayerKind.CONV, rng.child(f"{name}.conv1"), dtype)
        self.bn1 = BatchNorm(f"{name}.bn1", out_bounds[-1], dtype, bn_momentum, bn_eps)
        self.conv2 = CausalLayer(f"{name}.conv2", out_bounds, out_bounds, kernel_size, 1,
                                 LayerKind.CONV, rng.child(f"{name}.conv2"), dtype)
        self.bn2 = BatchNorm(f"{name}.bn2", out_bounds[-1], dtype, bn_momentum, bn_eps)
        self.shortcut: Optional[CausalLayer] = None
        self.bn_shortcut: Optional[BatchNorm] = None
        if stride != 1 or tuple(in_bounds) != tuple(out_bounds):
            self.shortcut = CausalLayer(f"{name}.shortcut", in_bounds, out_bounds, 1, stride,
                                        LayerKind.PROJECTION, rng.child(f"{name}.shortcut"), dtype)
            self.bn_shortcut = BatchNorm(f"{name}.bn_shortcut", out_bounds[-1], dtype, bn_momentum, bn_eps)

    def layers(self) -> List[CausalLayer]:
        return [self.conv1, self.conv2] + ([self.shortcut] if self.shortcut else [])

    def norms(self) -> List[BatchNorm]:
        return [self.bn1, self.bn2] + ([self.bn_shortcut] if self.bn_shortcut else [])

    def parameters(self) -> Iterator[Parameter]:
        for layer in self.layers():
            yield from layer.parameters()
        for norm in self.norms():
            yield from norm.parameters()

    def forward(self, x: Tensor, training: bool) -> Tensor:
        h = ops.relu(self.bn1.forward(self.conv1.forward(x), training))
        h = self.bn2.forward(self.conv2.forward(h), training)
        if self.shortcut is not None:
            s = self.bn_shortcut.forward(self.shortcut.forward(x), training)
        else:
            s = x
        return ops.relu(ops.add(h, s))

    def infer(self, x: np.ndarray, groups: int, counter: Optional[OpCounter] = None) -> np.ndarray:
        """Same arithmetic as forward() in eval mode; activation bookkeeping frees tensors as soon as they die"""
        a1 = self.conv1.infer(x, groups, counter)
        if counter:
            counter.alloc(_per_sample(a1))
        a1 = ops.relu_raw(self.bn1.infer(a1))
        a2 = self.bn2.infer(self.conv2.infer(a1, groups, counter))
        if counter:
            counter.alloc(_per_sample(a2))
            counter.free(_per_sample(a1))
        if self.shortcut is not None:
            s = self.bn_shortcut.infer(self.shortcut.infer(x, groups, counter))
            if counter:
                counter.alloc(_per_sample(s))
                counter.free(_per_sample(x))
                counter.free(_per_sample(s))
        else:
            s = x
            if counter:
                counter.free(_per_sample(x))
        return ops.relu_raw(a2 + s)


class CumulativeHead:
    """Shared classifier W^l whose prefix sums give one head per channel group"""

    def __init__(self, name: str, bounds: Sequence[int], classes: int, rng: Rng, dtype: np.dtype):
        self.name = name
        self.bounds = tuple(bounds)
        channels = self.bounds[-1]
        self.weight = Parameter(rng.normal((classes, channels), std=1.0 / np.sqrt(channels)).astype(dtype),
                                name=f"{name}.weight")
        self.bias = Parameter(np.zeros(classes, dtype=dtype), name=f"{name}.bias")

    @property
    def classes(self) -> int:
        return self.weight.shape[0]

    def parameters(self) -> Iterator[Parameter]:
        yield self.weight
        yield self.bias

    def forward(self, features: Tensor) -> Tensor:
        return ops.cumulative_heads(features, self.weight, self.bias, self.bounds)

    def infer(self, features: np.ndarray, groups: int, counter: Optional[OpCounter] = None) -> np.ndarray:
        used = self.bounds[groups - 1]
        return ops.cumulative_logits_raw(features[:, :used], self.weight.data[:, :used], self.bias.data,
                                         self.bounds[:groups], counter)[-1]

    def channel_groups(self) -> np.ndarray:
        return group_index(self.bounds)


def named_buffers(norms: Sequence[BatchNorm]) -> Dict[str, np.ndarray]:
    return {name: buf for norm in norms for name, buf in norm.buffers()}
