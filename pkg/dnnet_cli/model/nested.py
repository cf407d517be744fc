"""
Doubly nested residual network: L layer groups x C channel groups of heads
"""

import copy
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Union

import numpy as np

from ..core.config import ArchDescriptor
from ..core.errors import ConfigError, FrozenModelError, ShapeError
from ..numerics import ops
from ..numerics.counter import OpCounter
from ..numerics.rng import Rng
from ..numerics.tensor import Parameter, Precision, Tensor, no_grad
from ..utils.logging import get_logger
from .groups import GroupSpec
from .layers import BatchNorm, CausalLayer, CumulativeHead, LayerKind, ResidualBlock
from .plan import NetworkPlan

logger = get_logger(__name__)

ArrayLike = Union[np.ndarray, Tensor]


@dataclass
class LogitsGrid:
    """Logits of every (layer group, channel group) head for one batch"""
    layers: List[Tensor]

    @property
    def L(self) -> int:
        return len(self.layers)

    @property
    def C(self) -> int:
        return self.layers[0].shape[0]

    @property
    def values(self) -> np.ndarray:
        """[L, C, B, N]"""
        return np.stack([t.data for t in self.layers])

    def head(self, l: int, c: int) -> np.ndarray:
        return self.layers[l - 1].data[c - 1]


class NestedModel:
    """Stem, residual blocks with causal masks, and one cumulative head bank per layer group"""

    def __init__(self, descriptor: ArchDescriptor, group_spec: GroupSpec, rng: Rng):
        self.plan = NetworkPlan.build(descriptor, group_spec)
        self.descriptor = descriptor
        self.group_spec = group_spec
        self.frozen = False
        dtype = Precision.parse(descriptor.precision).dtype
        k = descriptor.kernel_size
        plan = self.plan

        stem_in = (descriptor.in_channels,) if plan.shared_input else plan.input_bounds
        self.stem = CausalLayer("stem.conv", stem_in, plan.stem_bounds, k, 1, LayerKind.STEM,
                                rng.child("stem.conv"), dtype, shared_input=plan.shared_input)
        self.stem_bn = BatchNorm("stem.bn", plan.stem_bounds[-1], dtype, descriptor.bn_momentum, descriptor.bn_eps)

        self.blocks: List[ResidualBlock] = [
            ResidualBlock(b.name, b.in_bounds, b.out_bounds, k, b.stride, rng.child(b.name), dtype,
                          descriptor.bn_momentum, descriptor.bn_eps)
            for b in plan.blocks
        ]
        self.sites = list(plan.sites)
        self.heads: List[CumulativeHead] = [
            CumulativeHead(f"heads.{l}", bounds, descriptor.classes, rng.child(f"heads.{l}"), dtype)
            for l, bounds in enumerate(plan.head_bounds)
        ]

        logger.debug("Built nested model: %d blocks, %dx%d heads, %d parameters",
                     len(self.blocks), self.L, self.C, self.num_parameters())

    @property
    def input_bounds(self):
        return self.plan.input_bounds

    @property
    def L(self) -> int:
        return len(self.sites)

    @property
    def C(self) -> int:
        return self.group_spec.num_groups

    @property
    def dtype(self) -> np.dtype:
        return self.stem.weight.dtype

    @property
    def precision(self) -> Precision:
        return Precision.parse(str(self.dtype))

    def layer_group_of_block(self, block: int) -> int:
        return self.plan.layer_group_of_block(block)

    def causal_layers(self) -> List[CausalLayer]:
        layers = [self.stem]
        for block in self.blocks:
            layers.extend(block.layers())
        return layers

    def norms(self) -> List[BatchNorm]:
        norms = [self.stem_bn]
        for block in self.blocks:
            norms.extend(block.norms())
        return norms

    def named_parameters(self) -> "OrderedDict[str, Parameter]":
        params: "OrderedDict[str, Parameter]" = OrderedDict()
        for p in self.stem.parameters():
            params[p.name] = p
        for p in self.stem_bn.parameters():
            params[p.name] = p
        for block in self.blocks:
            for p in block.parameters():
                params[p.name] = p
        for head in self.heads:
            for p in head.parameters():
                params[p.name] = p
        return params

    def parameters(self) -> List[Parameter]:
        return list(self.named_parameters().values())

    def named_buffers(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, buf) for norm in self.norms() for name, buf in norm.buffers())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def masks(self) -> Dict[str, np.ndarray]:
        return {layer.weight.name: layer.kernel.mask for layer in self.causal_layers()}

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def freeze(self) -> "NestedModel":
        self.frozen = True
        return self

    def unfreeze(self) -> "NestedModel":
        self.frozen = False
        return self

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        state: "OrderedDict[str, np.ndarray]" = OrderedDict((n, p.data) for n, p in self.named_parameters().items())
        state.update(self.named_buffers())
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        targets = self.state_dict()
        missing = sorted(set(targets) - set(state))
        if missing:
            raise ShapeError(f"State is missing tensors: {', '.join(missing[:5])}")
        for name, target in targets.items():
            value = np.asarray(state[name])
            if value.shape != target.shape:
                raise ShapeError(f"{name}: stored shape {list(value.shape)} != model shape {list(target.shape)}")
            target[...] = value

    def clone(self) -> "NestedModel":
        twin = copy.deepcopy(self)
        twin.zero_grad()
        return twin

    def astype(self, precision: Union[Precision, str]) -> "NestedModel":
        """Copy with every parameter and buffer cast to ``precision``"""
        precision = Precision.parse(precision)
        twin = self.clone()
        twin.descriptor.precision = precision.value
        for p in twin.parameters():
            p.data = p.data.astype(precision.dtype)
        for norm in twin.norms():
            norm.running_mean = norm.running_mean.astype(precision.dtype)
            norm.running_var = norm.running_var.astype(precision.dtype)
        return twin

    def _check_input(self, x: ArrayLike) -> np.ndarray:
        data = x.data if isinstance(x, Tensor) else np.asarray(x)
        if data.ndim != 4 or data.shape[1] != self.descriptor.in_channels:
            raise ShapeError(
                f"Input shape {list(data.shape)} incompatible with [B, {self.descriptor.in_channels}, H, W]"
            )
        return data.astype(self.dtype, copy=False)

    def _check_head(self, l: int, c: int) -> None:
        if not (1 <= l <= self.L and 1 <= c <= self.C):
            raise ConfigError(f"Head ({l}, {c}) out of range: model has {self.L} x {self.C} heads")

    def forward_grid(self, x: ArrayLike, training: bool = False) -> LogitsGrid:
        """Logits of all L x C heads; records the graph only in training mode"""
        data = self._check_input(x)
        if training and self.frozen:
            raise FrozenModelError("Model is frozen; unfreeze() before training")
        if training:
            return self._forward_grid(data, True)
        with no_grad():
            return self._forward_grid(data, False)

    def _forward_grid(self, data: np.ndarray, training: bool) -> LogitsGrid:
        layers: List[Tensor] = []
        h = ops.relu(self.stem_bn.forward(self.stem.forward(Tensor(data)), training))
        site_iter = iter(zip(self.sites, self.heads))
        site, head = next(site_iter)
        for index in range(len(self.blocks) + 1):
            if index > 0:
                h = self.blocks[index - 1].forward(h, training)
            if index == site:
                layers.append(head.forward(ops.global_avg_pool(h)))
                nxt = next(site_iter, None)
                if nxt is None:
                    break
                site, head = nxt
        return LogitsGrid(layers)

    def forward_head(self, x: ArrayLike, l: int, c: int, counter: Optional[OpCounter] = None) -> np.ndarray:
        """Logits of head (l, c) touching only blocks up to its site and channel groups 1..c"""
        self._check_head(l, c)
        data = self._check_input(x)[:, :self.input_bounds[c - 1]]
        per = lambda a: a.size // a.shape[0]  # noqa: E731

        if counter:
            counter.alloc(per(data))
        h = self.stem.infer(data, c, counter)
        if counter:
            counter.alloc(per(h))
            counter.free(per(data))
        h = ops.relu_raw(self.stem_bn.infer(h))
        for block in self.blocks[:self.sites[l - 1]]:
            h = block.infer(h, c, counter)

        features = ops.global_avg_pool_raw(h)
        if counter:
            counter.alloc(per(features))
            counter.free(per(h))
        logits = self.heads[l - 1].infer(features, c, counter)
        if counter:
            counter.alloc(per(logits))
            counter.free(per(features))
        return logits

    def cone_masks(self, d: int, w: int) -> Dict[str, np.ndarray]:
        """
        Positions of every parameter and buffer that can influence some head (l, c)
        with l <= d and c <= w. Everything outside is free to change without
        affecting those heads.
        """
        self._check_head(d, w)
        cone: Dict[str, np.ndarray] = {}

        def channel_rows(shape, keep: int, inside: bool) -> np.ndarray:
            mask = np.zeros(shape, dtype=bool)
            if inside:
                mask[:keep] = True
            return mask

        units = [(0, [self.stem], [self.stem_bn])]
        units += [(i + 1, b.layers(), b.norms()) for i, b in enumerate(self.blocks)]
        for block, layers, norms in units:
            inside = self.layer_group_of_block(block) <= d
            for layer in layers:
                cone[layer.weight.name] = channel_rows(layer.weight.shape, layer.out_bounds[w - 1], inside)
            keep = layers[0].out_bounds[w - 1]
            for norm in norms:
                for p in norm.parameters():
                    cone[p.name] = channel_rows(p.shape, keep, inside)
                for name, buf in norm.buffers():
                    cone[name] = channel_rows(buf.shape, keep, inside)
        for l, head in enumerate(self.heads, start=1):
            weight = np.zeros(head.weight.shape, dtype=bool)
            if l <= d:
                weight[:, :head.bounds[w - 1]] = True
            cone[head.weight.name] = weight
            cone[head.bias.name] = np.full(head.bias.shape, l <= d)
        return cone

    def iter_heads(self) -> Iterator[tuple]:
        for l in range(1, self.L + 1):
            for c in range(1, self.C + 1):
                yield l, c


def build_model(descriptor: ArchDescriptor, group_spec: Optional[GroupSpec] = None,
                rng: Optional[Rng] = None) -> NestedModel:
    """Construct and initialize a nested model (groups default to equal-size per stage)"""
    descriptor.validate()
    if group_spec is None:
        group_spec = GroupSpec.proportional(descriptor.stages, descriptor.groups)
    if rng is None:
        rng = Rng(descriptor.seed)
    return NestedModel(descriptor, group_spec, rng)
