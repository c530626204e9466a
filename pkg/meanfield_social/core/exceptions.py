"""Meanfield Social exceptions."""

from typing import Any, Dict, List, Optional


class MeanFieldError(Exception):
    """Base exception for all package errors."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}


# Configuration Errors
class ConfigError(MeanFieldError):
    """Raised when a run config, grid or simulation setting is invalid."""

    pass


class ModelValidationError(MeanFieldError):
    """Raised when an LQ model violates its structural invariants."""

    def __init__(self, message: str, errors: List[str]):
        super().__init__(message, {"errors": errors})
        self.errors = errors


# Numerical Errors
class NumericalError(MeanFieldError):
    """Base class for numerical failures."""

    pass


class BlowUpError(NumericalError):
    """Raised when an ODE state turns non-finite or a simulated state explodes."""

    def __init__(
        self,
        message: str,
        time: Optional[float] = None,
        path: Optional[int] = None,
        step: Optional[int] = None,
    ):
        super().__init__(message, {"time": time, "path": path, "step": step})
        self.time = time
        self.path = path
        self.step = step


class OutOfRangeError(MeanFieldError):
    """Raised when a time lies outside the horizon [0, T]."""

    def __init__(self, message: str, time: float, horizon: float):
        super().__init__(message, {"time": time, "horizon": horizon})
        self.time = time
        self.horizon = horizon


# Experiment Errors
class InsufficientSignalError(MeanFieldError):
    """Raised when every measured gap is below Monte Carlo resolution."""

    def __init__(self, message: str, report: Any = None):
        super().__init__(message, {"report": report})
        self.report = report


# Reporting Errors
class ReportError(MeanFieldError):
    """Raised when writing an artifact fails."""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message, {"path": path})
        self.path = path
