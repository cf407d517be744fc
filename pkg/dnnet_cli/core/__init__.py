"""
Core configuration and error types for dnnet-cli
"""

from .config import ArchDescriptor, DataConfig, LambdaConfig, RunConfig, TrainConfig
from .errors import ConfigError, DataError, DNNetError, InfeasibleBudgetError, VerificationError

__all__ = [
    "ArchDescriptor",
    "DataConfig",
    "LambdaConfig",
    "RunConfig",
    "TrainConfig",
    "ConfigError",
    "DataError",
    "DNNetError",
    "InfeasibleBudgetError",
    "VerificationError",
]
