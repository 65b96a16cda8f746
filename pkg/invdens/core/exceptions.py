"""
Custom exceptions for invdens.
Every error carries a machine-readable code and the process exit code the CLI
uses when the error escapes a command.
"""

from typing import Any, Dict, Optional
import logging

logger = logging.getLogger(__name__)


EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_FAILURE = 3


# Base Exception
class InvDensException(Exception):
    """Base exception for invdens."""

    def __init__(
        self,
        message: str,
        exit_code: int = EXIT_NUMERICAL_FAILURE,
        error_code: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        self.message = message
        self.exit_code = exit_code
        self.error_code = error_code or "INTERNAL_ERROR"
        self.details = details or {}
        super().__init__(self.message)

    def to_dict(self) -> Dict[str, Any]:
        """Serialisable error payload used by the CLI error handler."""
        return {
            "code": self.error_code,
            "message": self.message,
            "details": self.details,
        }


# Input Exceptions
class ParameterError(InvDensException):
    """Exception raised when a numeric argument is outside its domain."""

    def __init__(self, name: str, value: Any, constraint: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=f"Invalid {name}={value!r}: {constraint}",
            exit_code=EXIT_CONFIG_ERROR,
            error_code="PARAMETER_ERROR",
            details={"parameter": name, "value": repr(value), "constraint": constraint, **(details or {})}
        )


class ConfigError(InvDensException):
    """Exception raised for invalid or inconsistent experiment configuration."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            exit_code=EXIT_CONFIG_ERROR,
            error_code="CONFIG_ERROR",
            details=details
        )


class UnsupportedError(InvDensException):
    """Exception raised when an operation is not defined for the given input."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            exit_code=EXIT_CONFIG_ERROR,
            error_code="UNSUPPORTED",
            details=details
        )


# Numerical Exceptions
class NumericalError(InvDensException):
    """Exception raised when a numerical check fails."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            exit_code=EXIT_NUMERICAL_FAILURE,
            error_code="NUMERICAL_ERROR",
            details=details
        )


class SimulationError(NumericalError):
    """Exception raised when a path simulation produces non-finite values."""

    def __init__(self, message: str, time_index: int, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details={"time_index": time_index, **(details or {})})
        self.error_code = "SIMULATION_ERROR"
        self.time_index = time_index


class DimensionalityError(NumericalError):
    """Exception raised when a shift lattice or grid would be too large."""

    def __init__(self, size: int, limit: int):
        super().__init__(
            f"Refusing to evaluate {size} shifted points (limit {limit})",
            details={"size": size, "limit": limit}
        )
        self.error_code = "DIMENSIONALITY_ERROR"
