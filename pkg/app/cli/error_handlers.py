"""Mapping of exceptions to exit codes and structured error output"""

import json
import sys
from typing import Any

from pydantic import ValidationError

from app.core.exceptions import EXIT_PIPELINE_ERROR, EXIT_USAGE_ERROR, DriveCodeException
from app.utils.logger import setup_logger

logger = setup_logger(__name__)


def _emit(payload: dict[str, Any]) -> None:
    sys.stderr.write(json.dumps(payload, sort_keys=True, default=str) + "\n")


def drive_code_exception_handler(command: str, exc: DriveCodeException) -> int:
    """
    Handler for the toolkit's own exceptions

    Args:
        command: Subcommand that failed
        exc: Custom exception

    Returns:
        Exit code carried by the exception
    """
    logger.error(
        f"{exc.__class__.__name__}: {exc.message}",
        extra={"command": command, "details": exc.details},
    )
    _emit(exc.to_dict())
    return exc.exit_code


def validation_exception_handler(command: str, exc: ValidationError) -> int:
    """Invalid configuration values are usage errors"""
    errors = exc.errors()
    logger.warning(f"Configuration validation failed for {command}", extra={"errors": errors})
    _emit({
        "error": "ValidationError",
        "message": "Configuration validation failed",
        "exit_code": EXIT_USAGE_ERROR,
        "validation_errors": [
            {
                "field": ".".join(str(loc) for loc in error["loc"]),
                "message": error["msg"],
                "type": error["type"],
            }
            for error in errors
        ],
    })
    return EXIT_USAGE_ERROR


def generic_exception_handler(command: str, exc: Exception) -> int:
    """Handler for uncaught exceptions"""
    logger.exception(
        f"Unhandled exception in {command}",
        extra={"exception_type": type(exc).__name__},
        exc_info=exc,
    )
    _emit({
        "error": "InternalError",
        "message": "An unexpected error occurred",
        "exit_code": EXIT_PIPELINE_ERROR,
        "exception_type": type(exc).__name__,
    })
    return EXIT_PIPELINE_ERROR


def handle_exception(command: str, exc: Exception) -> int:
    """Dispatch an exception to its handler and return the process exit code"""
    if isinstance(exc, DriveCodeException):
        return drive_code_exception_handler(command, exc)
    if isinstance(exc, ValidationError):
        return validation_exception_handler(command, exc)
    return generic_exception_handler(command, exc)
