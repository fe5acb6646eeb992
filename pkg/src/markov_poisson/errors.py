"""Error handling utilities for markov-poisson."""

from __future__ import annotations

import json
from enum import Enum
from typing import Any, ClassVar

import numpy as np
import yaml
from pydantic import ValidationError


class ErrorCode(Enum):
    """Error codes for markov-poisson."""

    # Configuration errors
    CONFIG_NOT_FOUND = 1001
    CONFIG_INVALID = 1002
    CONFIG_PARSE_ERROR = 1003

    # Model errors
    INVALID_PARAMS = 2001
    LEVEL_OUT_OF_RANGE = 2002
    NOT_SINGLE_BIRTH = 2003
    NOT_SINGLE_DEATH = 2004
    NOT_BIRTH_DEATH = 2005

    # Truncation errors
    NEGATIVE_DEFICIT = 3001
    SINGULAR_COMPLEMENT = 3002

    # Solver errors
    NO_CLOSED_CLASS = 4001
    MULTIPLE_CLOSED_CLASSES = 4002
    SINGULAR_SYSTEM = 4003
    NUMERICAL_FAILURE = 4004
    ROUTE_MISMATCH = 4005
    ZERO_RATE = 4006
    MEAN_MISMATCH = 4007

    # Structured solver errors
    TAIL_NOT_CONVERGED = 5001

    # Simulation errors
    CAP_EXCEEDED = 6001

    # Sweep errors
    TOO_FEW_ROWS = 7001

    # File errors
    FILE_NOT_FOUND = 8001
    FILE_PERMISSION_ERROR = 8002
    FILE_WRITE_ERROR = 8003

    # Generic errors
    INTERNAL_ERROR = 9001
    UNKNOWN_ERROR = 9999


class MarkovPoissonError(Exception):
    """Base exception class for markov-poisson."""

    default_code: ClassVar[ErrorCode] = ErrorCode.UNKNOWN_ERROR
    numerical: ClassVar[bool] = False

    def __init__(
        self,
        message: str,
        error_code: ErrorCode | None = None,
        details: dict[str, Any] | None = None,
        original_error: Exception | None = None,
    ):
        """Initialize MarkovPoissonError.

        Args:
            message: Error message
            error_code: Error code (defaults to the class default)
            details: Additional error details
            original_error: Original exception (if any)
        """
        super().__init__(message)
        self.message = message
        self.error_code = error_code or self.default_code
        self.details = details or {}
        self.original_error = original_error

    def __str__(self) -> str:
        """Return string representation of the error."""
        return f"[{self.error_code.name}] {self.message}"

    @property
    def is_numerical(self) -> bool:
        """Whether the error signals a numerical failure rather than bad input."""
        return self.numerical

    def to_dict(self) -> dict[str, Any]:
        """Convert error to dictionary."""
        return {
            "error_code": self.error_code.value,
            "error_name": self.error_code.name,
            "message": self.message,
            "details": self.details,
            "original_error": str(self.original_error) if self.original_error else None,
        }


class ConfigError(MarkovPoissonError):
    """Configuration errors."""

    default_code = ErrorCode.CONFIG_INVALID


class FileError(MarkovPoissonError):
    """File errors."""

    default_code = ErrorCode.FILE_WRITE_ERROR


class ModelError(MarkovPoissonError):
    """Chain model errors."""

    default_code = ErrorCode.INVALID_PARAMS


class InvalidParamsError(ModelError):
    """Family parameters violate their constraints."""

    default_code = ErrorCode.INVALID_PARAMS


class NotSingleBirthError(ModelError):
    default_code = ErrorCode.NOT_SINGLE_BIRTH


class NotSingleDeathError(ModelError):
    default_code = ErrorCode.NOT_SINGLE_DEATH


class NotBirthDeathError(ModelError):
    default_code = ErrorCode.NOT_BIRTH_DEATH


class TruncationError(MarkovPoissonError):
    """Truncation and augmentation errors."""

    default_code = ErrorCode.NUMERICAL_FAILURE
    numerical = True


class NegativeDeficitError(TruncationError):
    """A truncated row carries more mass than the full row."""

    default_code = ErrorCode.NEGATIVE_DEFICIT


class SingularComplementError(TruncationError):
    """The censored block is not transient relative to the kept block."""

    default_code = ErrorCode.SINGULAR_COMPLEMENT


class SolverError(MarkovPoissonError):
    """Finite solver errors."""

    default_code = ErrorCode.NUMERICAL_FAILURE
    numerical = True


class NoClosedClassError(SolverError):
    default_code = ErrorCode.NO_CLOSED_CLASS


class MultipleClosedClassesError(SolverError):
    default_code = ErrorCode.MULTIPLE_CLOSED_CLASSES


class SingularSystemError(SolverError):
    """Some state cannot reach the anchor."""

    default_code = ErrorCode.SINGULAR_SYSTEM


class NumericalFailureError(SolverError):
    default_code = ErrorCode.NUMERICAL_FAILURE


class RouteMismatchError(SolverError):
    """The regenerative and stationary variance routes disagree."""

    default_code = ErrorCode.ROUTE_MISMATCH


class ZeroRateError(SolverError):
    default_code = ErrorCode.ZERO_RATE


class MeanMismatchError(SolverError):
    """pi^T g and the regenerative ratio E_j[zeta_j(g)] / E_j[tau_j] disagree."""

    default_code = ErrorCode.MEAN_MISMATCH


class StructuredError(MarkovPoissonError):
    """Structured (single-birth / single-death) solver errors."""

    default_code = ErrorCode.TAIL_NOT_CONVERGED
    numerical = True


class TailNotConvergedError(StructuredError):
    default_code = ErrorCode.TAIL_NOT_CONVERGED


class SimulationError(MarkovPoissonError):
    """Monte Carlo oracle errors."""

    default_code = ErrorCode.CAP_EXCEEDED
    numerical = True


class CapExceededError(SimulationError):
    default_code = ErrorCode.CAP_EXCEEDED


class SweepError(MarkovPoissonError):
    """Sweep orchestration errors."""

    default_code = ErrorCode.TOO_FEW_ROWS


class TooFewRowsError(SweepError):
    default_code = ErrorCode.TOO_FEW_ROWS


def handle_error(error: Exception) -> MarkovPoissonError:
    """Convert generic exception to MarkovPoissonError.

    Args:
        error: Original exception

    Returns:
        MarkovPoissonError: Standardized error
    """
    if isinstance(error, MarkovPoissonError):
        return error

    if isinstance(error, FileNotFoundError):
        return ConfigError(
            f"File not found: {error.filename}",
            ErrorCode.CONFIG_NOT_FOUND,
            {"filename": error.filename},
            error,
        )
    elif isinstance(error, PermissionError):
        return FileError(
            f"Permission denied: {error.filename}",
            ErrorCode.FILE_PERMISSION_ERROR,
            {"filename": error.filename},
            error,
        )
    elif isinstance(error, (json.JSONDecodeError, yaml.YAMLError)):
        return ConfigError(
            f"Malformed configuration: {error}",
            ErrorCode.CONFIG_PARSE_ERROR,
            {},
            error,
        )
    elif isinstance(error, ValidationError):
        return ConfigError(
            f"Invalid configuration: {error.error_count()} validation error(s)",
            ErrorCode.CONFIG_INVALID,
            {"errors": [e["msg"] for e in error.errors()]},
            error,
        )
    elif isinstance(error, np.linalg.LinAlgError):
        return NumericalFailureError(
            f"Linear algebra failure: {error}",
            ErrorCode.NUMERICAL_FAILURE,
            {},
            error,
        )
    else:
        return MarkovPoissonError(
            f"An unexpected error occurred: {str(error)}",
            ErrorCode.UNKNOWN_ERROR,
            {"type": type(error).__name__},
            error,
        )


def format_error(error: MarkovPoissonError) -> str:
    """Format error for user display.

    Args:
        error: MarkovPoissonError instance

    Returns:
        str: Formatted error message
    """
    msg = f"Error: {error.message}"
    if error.details:
        for key, value in error.details.items():
            msg += f"\n  {key}: {value}"
    if error.original_error:
        msg += f"\n  Original error: {error.original_error}"
    return msg
