"""
Static layout of a nested network: channel bounds, strides and head sites per block
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

from ..core.config import ArchDescriptor
from ..core.errors import ConfigError
from .groups import Boundaries, GroupSpec


def output_size(size: int, kernel_size: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel_size) // stride + 1


@dataclass(frozen=True)
class BlockPlan:
    name: str
    stage: int
    in_bounds: Boundaries
    out_bounds: Boundaries
    stride: int

    @property
    def projection(self) -> bool:
        return self.stride != 1 or self.in_bounds != self.out_bounds


@dataclass(frozen=True)
class NetworkPlan:
    """Everything about a network's shape that does not depend on weight values"""
    descriptor: ArchDescriptor
    group_spec: GroupSpec
    input_bounds: Boundaries
    shared_input: bool
    stem_bounds: Boundaries
    blocks: Tuple[BlockPlan, ...]
    sites: Tuple[int, ...]
    head_bounds: Tuple[Boundaries, ...]

    @classmethod
    def build(cls, descriptor: ArchDescriptor, group_spec: Optional[GroupSpec] = None) -> "NetworkPlan":
        descriptor.validate()
        if group_spec is None:
            group_spec = GroupSpec.proportional(descriptor.stages, descriptor.groups)
        if group_spec.num_groups != descriptor.groups:
            raise ConfigError(f"GroupSpec has {group_spec.num_groups} groups, descriptor asks for {descriptor.groups}")
        if [group_spec.stage_width(s) for s in range(group_spec.num_stages)] != descriptor.stages:
            raise ConfigError("GroupSpec stage widths do not match the descriptor")
        bounds = group_spec.boundaries

        shared = descriptor.input_grouping == "shared"
        if shared:
            input_bounds = tuple([descriptor.in_channels] * descriptor.groups)
        else:
            input_bounds = GroupSpec.proportional([descriptor.in_channels], descriptor.groups).boundaries[0]

        blocks: List[BlockPlan] = []
        previous = bounds[0]
        for stage, count in enumerate(descriptor.blocks):
            for j in range(count):
                stride = 2 if stage > 0 and j == 0 else 1
                blocks.append(BlockPlan(f"blocks.{len(blocks)}", stage, previous, bounds[stage], stride))
                previous = bounds[stage]

        sites = tuple(descriptor.site_indices())
        head_bounds = tuple(bounds[0] if site == 0 else blocks[site - 1].out_bounds for site in sites)
        return cls(descriptor, group_spec, input_bounds, shared, bounds[0], tuple(blocks), sites, head_bounds)

    @property
    def L(self) -> int:
        return len(self.sites)

    @property
    def C(self) -> int:
        return self.group_spec.num_groups

    @property
    def kernel_size(self) -> int:
        return self.descriptor.kernel_size

    @property
    def padding(self) -> int:
        return self.descriptor.kernel_size // 2

    def check_slice(self, d: int, w: int) -> None:
        if not (1 <= d <= self.L and 1 <= w <= self.C):
            raise ConfigError(f"Slice ({d}, {w}) out of range: grid is {self.L} x {self.C}")

    def depth(self, d: int) -> int:
        """Residual blocks used by layer group d"""
        return self.sites[d - 1]

    def layer_group_of_block(self, block: int) -> int:
        """1-based layer group containing block ``block`` (0 = stem)"""
        for l, site in enumerate(self.sites, start=1):
            if block <= site:
                return l
        raise ConfigError(f"Block {block} is beyond the last head site")
