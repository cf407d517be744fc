"""
Command implementations behind the dnnet CLI
"""

from .grid_commands import GridCommands
from .slice_commands import SliceCommands
from .train_commands import TrainCommands
from .verify_commands import VerifyCommands

__all__ = [
    "GridCommands",
    "SliceCommands",
    "TrainCommands",
    "VerifyCommands",
]
