"""
Error hierarchy for dnnet-cli

Each error carries the process exit code the CLI uses when it escapes a command.
"""

from typing import Any, Dict, Optional


class DNNetError(Exception):
    """Base class for all dnnet-cli errors"""
    exit_code: int = 1


class ConfigError(DNNetError, ValueError):
    """Invalid or incomplete configuration"""
    exit_code = 2


class DataError(DNNetError, ValueError):
    """Dataset files missing, short or malformed"""
    exit_code = 3


class InfeasibleBudgetError(DNNetError):
    """No slice satisfies the requested budget"""
    exit_code = 4


class VerificationError(DNNetError):
    """One or more invariant checks failed"""
    exit_code = 5


class ShapeError(DNNetError, ValueError):
    """Operand shapes are incompatible"""


class GraphError(DNNetError, RuntimeError):
    """Backward requested on something that has no recorded forward"""


class FrozenModelError(DNNetError, RuntimeError):
    """Operation not allowed in the model's current frozen/unfrozen state"""


class TrainingDivergedError(DNNetError, RuntimeError):
    """Aggregate loss became non-finite during training"""

    def __init__(self, step: int, diagnostics: Optional[Dict[str, Any]] = None):
        self.step = step
        self.diagnostics = diagnostics or {}
        details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        super().__init__(f"Non-finite loss at step {step}" + (f" ({details})" if details else ""))


class ContainerError(DNNetError):
    """Model container could not be read"""


class FormatError(ContainerError):
    """Not a model container (bad magic or malformed header)"""


class VersionMismatchError(ContainerError):
    """Container written by an unsupported format version"""

    def __init__(self, found: int, supported: int):
        self.found = found
        self.supported = supported
        super().__init__(f"Container format version {found} is not supported (expected {supported})")


class ChecksumError(ContainerError):
    """Stored checksum does not match the container contents"""


class TruncatedContainerError(ChecksumError):
    """Container ends before its declared contents"""

    def __init__(self, expected: int, found: int):
        self.expected = expected
        self.found = found
        super().__init__(f"Container truncated: expected at least {expected} bytes, found {found}")
