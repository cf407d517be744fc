"""
Utility functions for dnnet-cli
"""

from .logging import get_logger, setup_logging
from .helpers import display_error, display_success, display_grid

__all__ = ["setup_logging", "get_logger", "display_error", "display_success", "display_grid"]
