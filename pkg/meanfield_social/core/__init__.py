"""
Meanfield Social core module: constants, exceptions, run configuration and
optional error tracking.
"""

from .constants import (
    DEFAULT_STEPS,
    ENV_VARS,
    MANIFEST_FILENAME,
    MOMENT_WARNING_LEVEL,
    PATH_BLOCK_SIZE,
    REPORT_SIGNIFICANT_DIGITS,
    STATE_BLOWUP_NORM,
    SYMMETRY_TOLERANCE,
    # Enums
    Command,
    DeviationKind,
    ExitCode,
    InitialKind,
    LogLevel,
    ModelKind,
)
from .exceptions import (
    BlowUpError,
    ConfigError,
    InsufficientSignalError,
    MeanFieldError,
    ModelValidationError,
    NumericalError,
    OutOfRangeError,
    ReportError,
)
from .config import RunConfig, apply_overrides, config_hash, load_config, parse_overrides

# Sentry configuration (optional)
try:
    from .sentry_config import (
        capture_exception,
        initialize_sentry,
        is_initialized as is_sentry_initialized,
        is_sentry_enabled,
        set_run_context,
        shutdown_sentry,
    )
except ImportError:
    initialize_sentry = lambda *args, **kwargs: False  # noqa: E731
    capture_exception = lambda *args, **kwargs: None  # noqa: E731
    set_run_context = lambda *args, **kwargs: None  # noqa: E731
    is_sentry_enabled = lambda: False  # noqa: E731
    is_sentry_initialized = lambda: False  # noqa: E731
    shutdown_sentry = lambda: None  # noqa: E731

__all__ = [
    # Constants
    "DEFAULT_STEPS",
    "ENV_VARS",
    "MANIFEST_FILENAME",
    "MOMENT_WARNING_LEVEL",
    "PATH_BLOCK_SIZE",
    "REPORT_SIGNIFICANT_DIGITS",
    "STATE_BLOWUP_NORM",
    "SYMMETRY_TOLERANCE",
    # Enums
    "Command",
    "DeviationKind",
    "ExitCode",
    "InitialKind",
    "LogLevel",
    "ModelKind",
    # Exceptions
    "MeanFieldError",
    "ConfigError",
    "ModelValidationError",
    "NumericalError",
    "BlowUpError",
    "OutOfRangeError",
    "InsufficientSignalError",
    "ReportError",
    # Configuration
    "RunConfig",
    "load_config",
    "parse_overrides",
    "apply_overrides",
    "config_hash",
    # Sentry (optional)
    "initialize_sentry",
    "capture_exception",
    "set_run_context",
    "is_sentry_enabled",
    "is_sentry_initialized",
    "shutdown_sentry",
]
