"""
Instrumentation for inference paths: executed MACs, channels read, live activations
"""

from dataclasses import dataclass, field
from typing import Any, Dict


@dataclass
class OpCounter:
    """Counts work done by one inference pass (batch-size independent MACs are the caller's job)"""
    macs: int = 0
    live: int = 0
    peak_activation: int = 0
    channels_read: Dict[str, int] = field(default_factory=dict)

    def add_macs(self, count: int) -> None:
        self.macs += int(count)

    def read_channels(self, layer: str, channels: int) -> None:
        self.channels_read[layer] = max(self.channels_read.get(layer, 0), int(channels))

    def alloc(self, scalars: int) -> None:
        self.live += int(scalars)
        self.peak_activation = max(self.peak_activation, self.live)

    def free(self, scalars: int) -> None:
        self.live -= int(scalars)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'macs': self.macs,
            'peak_activation': self.peak_activation,
            'channels_read': dict(self.channels_read),
        }
