"""
Optional Sentry error tracking for meanfield-social runs.

Sentry is enabled via environment variables or CLI flags and is completely
optional: every helper is a no-op when `sentry-sdk` is not installed or
tracking was never initialized.
"""

import logging
import os
from typing import Any, Dict, List, Optional

from ..__version__ import __version__
from .constants import ENV_VARS, SENTRY_DEFAULT_ENVIRONMENT, SENTRY_DEFAULT_TRACES_SAMPLE_RATE

logger = logging.getLogger(__name__)

_TRUTHY = ("true", "1", "yes", "on")

# Global flag to track if Sentry is initialized
_sentry_initialized = False


def is_sentry_enabled() -> bool:
    """Check if Sentry is enabled via environment variables."""
    return os.getenv(ENV_VARS["SENTRY_ENABLED"], "false").lower() in _TRUTHY


def get_sentry_dsn() -> Optional[str]:
    return os.getenv(ENV_VARS["SENTRY_DSN"])


def get_sentry_environment() -> str:
    return os.getenv(ENV_VARS["SENTRY_ENVIRONMENT"], SENTRY_DEFAULT_ENVIRONMENT)


def get_sentry_release() -> str:
    """Explicit release from the environment, else the package version."""
    return os.getenv(ENV_VARS["SENTRY_RELEASE"]) or f"meanfield-social@{__version__}"


def get_sentry_config() -> Dict[str, Any]:
    """Complete Sentry configuration from environment variables."""
    return {
        "dsn": get_sentry_dsn(),
        "environment": get_sentry_environment(),
        "release": get_sentry_release(),
        "traces_sample_rate": SENTRY_DEFAULT_TRACES_SAMPLE_RATE,
        "attach_stacktrace": True,
        "send_default_pii": False,
        "max_breadcrumbs": 50,
    }


def setup_sentry_integrations() -> List[Any]:
    """Logging and threading integrations when the SDK is importable."""
    integrations: List[Any] = []
    try:
        from sentry_sdk.integrations.logging import LoggingIntegration
        from sentry_sdk.integrations.threading import ThreadingIntegration

        integrations.extend(
            [
                LoggingIntegration(level=logging.INFO, event_level=logging.ERROR),
                ThreadingIntegration(propagate_hub=True),
            ]
        )
    except ImportError:
        logger.debug("Sentry SDK not available, skipping integration setup")
    except Exception as e:
        logger.warning(f"Error setting up Sentry integrations: {e}")
    return integrations


def initialize_sentry(
    dsn: Optional[str] = None,
    environment: Optional[str] = None,
    release: Optional[str] = None,
    enabled: Optional[bool] = None,
    **kwargs: Any,
) -> bool:
    """
    Initialize Sentry with optional configuration override.

    Args:
        dsn: Sentry DSN (overrides environment)
        environment: Environment name (overrides environment)
        release: Release version (overrides environment)
        enabled: Force enable/disable (overrides environment)
        **kwargs: Additional Sentry configuration

    Returns:
        True if Sentry was successfully initialized, False otherwise
    """
    global _sentry_initialized

    if _sentry_initialized:
        logger.debug("Sentry already initialized, skipping")
        return True

    if enabled is None:
        enabled = is_sentry_enabled()
    if not enabled:
        logger.debug("Sentry integration is disabled")
        return False

    dsn = dsn or get_sentry_dsn()
    if not dsn:
        logger.warning("Sentry is enabled but no DSN provided")
        return False

    try:
        import sentry_sdk

        config = get_sentry_config()
        config["dsn"] = dsn
        if environment:
            config["environment"] = environment
        if release:
            config["release"] = release
        config.update(kwargs)
        config["integrations"] = setup_sentry_integrations()

        sentry_sdk.init(**config)
        sentry_sdk.set_tag("component", "meanfield-social")
        sentry_sdk.set_tag("package_version", __version__)

        _sentry_initialized = True
        logger.info(f"Sentry initialized for environment: {config['environment']}")
        return True
    except ImportError:
        logger.debug("Sentry SDK not available, skipping initialization")
        return False
    except Exception as e:
        logger.error(f"Failed to initialize Sentry: {e}")
        return False


def capture_exception(exception: Exception, **kwargs: Any) -> Optional[str]:
    """
    Capture an exception to Sentry if initialized.

    Args:
        exception: The exception to capture
        **kwargs: Additional context; scalars become extras, mappings contexts

    Returns:
        Event ID if captured, None otherwise
    """
    if not _sentry_initialized:
        return None

    try:
        import sentry_sdk

        with sentry_sdk.isolation_scope() as scope:
            for key, value in kwargs.items():
                if isinstance(value, (str, int, float, bool)):
                    scope.set_extra(key, value)
                else:
                    scope.set_context(key, value)
            return sentry_sdk.capture_exception(exception)
    except ImportError:
        return None


def set_run_context(command: str, seed: Optional[int], config_hash: str, **kwargs: Any) -> None:
    """Attach the current run (command, seed, config hash) to later events."""
    if not _sentry_initialized:
        return

    try:
        import sentry_sdk

        sentry_sdk.set_context(
            "run", {"command": command, "seed": seed, "config_hash": config_hash, **kwargs}
        )
    except ImportError:
        pass


def is_initialized() -> bool:
    return _sentry_initialized


def shutdown_sentry() -> None:
    """Flush and close the Sentry client."""
    global _sentry_initialized

    if not _sentry_initialized:
        return

    try:
        import sentry_sdk

        sentry_sdk.get_client().close()
        _sentry_initialized = False
        logger.info("Sentry client shut down")
    except ImportError:
        pass
    except Exception as e:
        logger.error(f"Failed to shutdown Sentry client: {e}")
