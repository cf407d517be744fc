"""
Channel groups and block-lower-triangular masks
"""

from bisect import bisect_right
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..core.errors import ConfigError

Boundaries = Tuple[int, ...]


def _check_boundaries(bounds: Sequence[int], label: str) -> Boundaries:
    bounds = tuple(int(b) for b in bounds)
    if not bounds or bounds[0] < 1 or any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
        raise ConfigError(f"{label} boundaries must be strictly increasing positive counts, got {list(bounds)}")
    return bounds


def nearest_valid_widths(width: int, groups: int) -> List[int]:
    """Closest widths (below and above) divisible by ``groups``"""
    below = (width // groups) * groups
    above = below + groups
    return [w for w in (below, above) if w >= groups]


@dataclass(frozen=True)
class GroupSpec:
    """Ordered channel groups for every stage; group i covers channels [b[i-1], b[i])"""
    num_groups: int
    boundaries: Tuple[Boundaries, ...]

    def __post_init__(self):
        if self.num_groups < 1:
            raise ConfigError("num_groups must be positive")
        checked = []
        for stage, bounds in enumerate(self.boundaries):
            bounds = _check_boundaries(bounds, f"Stage {stage}")
            if len(bounds) != self.num_groups:
                raise ConfigError(
                    f"Stage {stage} has {len(bounds)} groups; every stage needs {self.num_groups}"
                )
            checked.append(bounds)
        object.__setattr__(self, "boundaries", tuple(checked))

    @classmethod
    def proportional(cls, widths: Sequence[int], groups: int) -> "GroupSpec":
        """Equal-size groups per stage; every width must be divisible by ``groups``"""
        bad = [w for w in widths if w % groups]
        if bad:
            hints = "; ".join(f"{w} -> {nearest_valid_widths(w, groups)}" for w in bad)
            raise ConfigError(f"Stage widths not divisible into {groups} groups (nearest valid widths: {hints})")
        return cls(groups, tuple(tuple((i + 1) * w // groups for i in range(groups)) for w in widths))

    @property
    def num_stages(self) -> int:
        return len(self.boundaries)

    def stage_width(self, stage: int) -> int:
        return self.boundaries[stage][-1]

    def retained(self, stage: int, groups: int) -> int:
        """Channels kept in ``stage`` by a slice with ``groups`` channel groups"""
        return self.boundaries[stage][groups - 1]

    def group_of(self, channel: int, stage: int) -> int:
        """1-based group of a 0-based channel index"""
        return bisect_right(self.boundaries[stage], channel) + 1

    def to_dict(self):
        return {'num_groups': self.num_groups, 'boundaries': [list(b) for b in self.boundaries]}

    @classmethod
    def from_dict(cls, data) -> "GroupSpec":
        return cls(int(data['num_groups']), tuple(tuple(b) for b in data['boundaries']))


def group_index(bounds: Sequence[int]) -> np.ndarray:
    """0-based group id of every channel"""
    return np.repeat(np.arange(len(bounds)), np.diff([0, *bounds]))


def build_mask(in_bounds: Sequence[int], out_bounds: Sequence[int], k: int) -> np.ndarray:
    """mask[o, i] = 1 iff group(i) <= group(o), repeated over the k x k window"""
    if len(in_bounds) != len(out_bounds):
        raise ConfigError(f"Group counts differ: {len(in_bounds)} input vs {len(out_bounds)} output groups")
    in_bounds = _check_boundaries(in_bounds, "Input")
    out_bounds = _check_boundaries(out_bounds, "Output")
    allowed = group_index(in_bounds)[None, :] <= group_index(out_bounds)[:, None]
    return np.broadcast_to(allowed[:, :, None, None], (out_bounds[-1], in_bounds[-1], k, k)).astype(np.uint8)


def shared_input_mask(in_channels: int, out_channels: int, k: int) -> np.ndarray:
    """Every output group sees the whole input"""
    return np.ones((out_channels, in_channels, k, k), dtype=np.uint8)


def masked_position_count(in_bounds: Sequence[int], out_bounds: Sequence[int], k: int, groups: int) -> int:
    """Unmasked positions among output groups 1..groups (closed form of the block-triangular count)"""
    previous = 0
    total = 0
    for g in range(groups):
        total += (out_bounds[g] - previous) * in_bounds[g]
        previous = out_bounds[g]
    return total * k * k
