"""Logging configuration and setup"""

import logging
import sys
from app.config import settings

_configured: set[str] = set()


def setup_logger(name: str) -> logging.Logger:
    """
    Configure and return a logger instance

    Args:
        name: Logger name(usually __name__)

    Returns:
        Configured logger instance writing to standard error
    """
    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, settings.log_level))

    # Progress goes to stderr, data only to declared output files
    handler = logging.StreamHandler(sys.stderr)
    handler.setLevel(logging.DEBUG)

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    handler.setFormatter(formatter)

    if not logger.handlers:
        logger.addHandler(handler)
    logger.propagate = False
    _configured.add(name)

    return logger


def set_log_level(level: str) -> None:
    """Apply a level to every logger created through setup_logger"""
    numeric = getattr(logging, level.upper())
    for name in _configured:
        logging.getLogger(name).setLevel(numeric)
