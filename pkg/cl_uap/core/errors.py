"""
Exception hierarchy for the CL-UAP toolkit.

Every error derives from UapToolkitError and from the builtin exception a
caller would naturally catch, so ``except ValueError`` keeps working.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Union


class UapToolkitError(Exception):
    """Base class for all toolkit errors."""


class InvalidValueError(UapToolkitError, ValueError):
    """Raised when numeric input contains NaN or infinite values."""


class ContractError(UapToolkitError, ValueError):
    """Raised when a caller violates an operation's preconditions."""


class DegenerateInputError(UapToolkitError, ValueError):
    """Raised for inputs that have no meaningful result (e.g. zero vectors)."""


class ConfigurationError(UapToolkitError, ValueError):
    """Raised for invalid configuration, corpora or run setup."""


class FormatError(UapToolkitError, ValueError):
    """Raised when a persisted artefact is corrupt or inconsistent."""


class CheckpointLoadError(UapToolkitError, IOError):
    """
    Raised when an external model checkpoint cannot be read.

    Attributes:
        path: Path of the checkpoint that failed to load.
    """

    def __init__(self, path: Union[str, Path], reason: str):
        self.path = str(path)
        super().__init__(f"Failed to load checkpoint '{self.path}': {reason}")


class DivergenceError(UapToolkitError, RuntimeError):
    """
    Raised when an optimization loop produces a non-finite loss.

    Attributes:
        iteration: Zero-based iteration index at which the loss diverged.
    """

    def __init__(self, iteration: int, detail: Optional[str] = None):
        self.iteration = iteration
        message = f"Optimization diverged at iteration {iteration}"
        if detail:
            message += f": {detail}"
        super().__init__(message)
