"""
Error types raised by opnorm-lab services.

The CLI maps ConfigError (and pydantic validation errors) to exit status 2
and every other OpnormLabError to exit status 1.
"""

from typing import Optional


class OpnormLabError(Exception):
    """Base class for all opnorm-lab errors."""


class InputValidationError(OpnormLabError, ValueError):
    """Numeric input is malformed, e.g. contains NaN or infinite entries."""


class ArgumentError(OpnormLabError, ValueError):
    """An argument is outside its admissible range."""


class ConfigError(OpnormLabError, ValueError):
    """
    A configuration value is invalid.

    Args:
        message (str): Human-readable description.
        field (str, optional): Dotted path of the offending field.
    """

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class DataError(OpnormLabError, ValueError):
    """Data produced a non-finite objective or could not be loaded."""


class InvariantError(OpnormLabError, RuntimeError):
    """An internal construction violated its own invariant."""


class ReplicationError(OpnormLabError, RuntimeError):
    """
    A Monte Carlo replication failed.

    Args:
        seed (int): Seed of the failing replication.
        cause (BaseException): Original exception.
    """

    def __init__(self, seed: int, cause: BaseException):
        super().__init__(f"replication with seed {seed} failed: {cause}")
        self.seed = seed
        self.cause = cause
