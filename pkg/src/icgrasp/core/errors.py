"""Exception hierarchy for icgrasp.

The CLI maps these onto process exit codes, see ``EXIT_CODES``.
"""

from typing import Dict, Optional, Type


class IcgraspError(Exception):
    """Base class for all icgrasp errors."""


class InvalidArgumentError(IcgraspError, ValueError):
    """An argument violates the operation's precondition."""


class InvalidStateError(IcgraspError, RuntimeError):
    """An operation was called in a state where it cannot run."""


class GenerationError(IcgraspError):
    """Scene generation could not satisfy its constraints."""

    def __init__(self, message: str, scene_index: Optional[int] = None):
        """Initialize the error.

        Args:
            message: Human readable description
            scene_index: Index of the scene being generated, if known
        """
        if scene_index is not None:
            message = f"scene {scene_index}: {message}"
        super().__init__(message)
        self.scene_index = scene_index


class DataError(IcgraspError):
    """A dataset record, checkpoint or input file is missing or corrupt."""


class ConfigError(IcgraspError):
    """A run configuration could not be loaded or validated."""


class InvariantViolation(IcgraspError):
    """An internal invariant did not hold."""


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INVARIANT = 4

EXIT_CODES: Dict[Type[IcgraspError], int] = {
    ConfigError: EXIT_CONFIG,
    DataError: EXIT_DATA,
    GenerationError: EXIT_DATA,
    InvariantViolation: EXIT_INVARIANT,
}


def exit_code_for(error: BaseException) -> int:
    """Return the CLI exit code for an exception.

    Args:
        error: The exception raised by a subcommand

    Returns:
        Exit code; unknown icgrasp errors count as invariant violations
    """
    for error_type, code in EXIT_CODES.items():
        if isinstance(error, error_type):
            return code
    if isinstance(error, OSError):
        return EXIT_DATA
    return EXIT_INVARIANT
