"""Meanfield Social constants and enumerations."""

from enum import Enum, IntEnum
from typing import Final


# ODE integration
DEFAULT_STEPS: Final[int] = 2000
SYMMETRY_TOLERANCE: Final[float] = 1e-12

# Simulation
STATE_BLOWUP_NORM: Final[float] = 1e12
MOMENT_WARNING_LEVEL: Final[float] = 1e6
PATH_BLOCK_SIZE: Final[int] = 32  # paths per work unit; fixed so results never depend on workers
PATH_DUMP_MAX_ROWS: Final[int] = 10**7
DT_DIVISIBILITY_TOLERANCE: Final[float] = 1e-12
DEFAULT_THREADS: Final[int] = 4

# Checks run by the `check` command
Z_IDENTITY_TOLERANCE: Final[float] = 1e-6
ODE_RESIDUAL_TOLERANCE: Final[float] = 1e-6
TERMINAL_TOLERANCE: Final[float] = 1e-12
REPRESENTATION_TOLERANCE: Final[float] = 1e-10
MINIMIZER_TOLERANCE: Final[float] = 1e-9
CHECK_SAMPLE_POINTS: Final[int] = 20
CHECK_RANDOM_CONTROLS: Final[int] = 100

# Systemic risk identities
SR_IDENTITY_TOLERANCE: Final[float] = 1e-8

# Experiments
DEFAULT_SCALES: Final[tuple[float, ...]] = (0.5, 1.5)
DEFAULT_CONSTANT_CONTROL: Final[float] = 0.1
SIGNIFICANCE_MULTIPLIER: Final[float] = 2.0
MIN_SCALING_POINTS: Final[int] = 4

# Reporting
REPORT_SIGNIFICANT_DIGITS: Final[int] = 17
MANIFEST_FILENAME: Final[str] = "manifest.json"


class Command(str, Enum):
    """CLI commands."""

    SOLVE = "solve"
    CHECK = "check"
    SIMULATE = "simulate"
    PBP = "pbp"
    SCALING = "scaling"
    SYSTEMIC_RISK = "systemic-risk"


class ModelKind(str, Enum):
    """Model families accepted in a run config."""

    LQ = "lq"
    SYSTEMIC_RISK = "systemic_risk"


class InitialKind(str, Enum):
    """Initial state distributions."""

    GAUSSIAN = "gaussian"
    POINT_MASS = "point-mass"
    UNIFORM_BOX = "uniform-box"


class DeviationKind(str, Enum):
    """Control laws agent 1 may switch to."""

    NONE = "none"
    ZERO_CONTROL = "zero-control"
    SCALED = "scaled"
    CONSTANT = "constant"
    CUSTOM = "custom-feedback"


class ExitCode(IntEnum):
    """Process exit codes of the CLI."""

    OK = 0
    VALIDATION_FAILURE = 1
    NUMERICAL_FAILURE = 2
    CHECK_FAILURE = 3


class LogLevel(str, Enum):
    """Log levels."""

    DEBUG = "debug"
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"


# Standard environment variables
ENV_VARS = {
    "THREADS": "MEANFIELD_THREADS",
    "LOG_LEVEL": "MEANFIELD_LOG_LEVEL",
    "SENTRY_DSN": "MEANFIELD_SENTRY_DSN",
    "SENTRY_ENVIRONMENT": "MEANFIELD_SENTRY_ENVIRONMENT",
    "SENTRY_RELEASE": "MEANFIELD_SENTRY_RELEASE",
    "SENTRY_ENABLED": "MEANFIELD_SENTRY_ENABLED",
}

# Sentry Configuration
SENTRY_DEFAULT_TRACES_SAMPLE_RATE: Final[float] = 0.0
SENTRY_DEFAULT_ENVIRONMENT: Final[str] = "development"
