"""
Doubly nested network construction
"""

from .groups import GroupSpec, build_mask
from .layers import BatchNorm, CausalLayer, CumulativeHead, LayerKind, ResidualBlock
from .nested import LogitsGrid, NestedModel, build_model
from .plan import BlockPlan, NetworkPlan, output_size

__all__ = [
    "GroupSpec",
    "build_mask",
    "BatchNorm",
    "CausalLayer",
    "CumulativeHead",
    "LayerKind",
    "ResidualBlock",
    "LogitsGrid",
    "NestedModel",
    "build_model",
    "BlockPlan",
    "NetworkPlan",
    "output_size",
]
