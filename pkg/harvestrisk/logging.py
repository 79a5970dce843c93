"""Logging configuration for harvestrisk."""

import os
import sys
from typing import Optional

from loguru import logger

LEVELS = {
    "error": "ERROR",
    "warn": "WARNING",
    "warning": "WARNING",
    "info": "INFO",
    "debug": "DEBUG",
}
DEFAULT_LEVEL = "WARNING"

_configured_level: Optional[str] = None


def resolve_level(verbose: bool = False, level: Optional[str] = None) -> str:
    """Pick the effective loguru level.

    Precedence: ``verbose`` flag, explicit ``level``, ``LOG_LEVEL`` env var,
    then WARNING.
    """
    if verbose:
        return "DEBUG"
    requested = level or os.getenv("LOG_LEVEL")
    if not requested:
        return DEFAULT_LEVEL
    resolved = LEVELS.get(requested.strip().lower())
    if resolved is None:
        logger.warning(f"Unknown LOG_LEVEL {requested!r}, using {DEFAULT_LEVEL}")
        return DEFAULT_LEVEL
    return resolved


def configure_logging(verbose: bool = False, level: Optional[str] = None) -> str:
    """Configure the stderr sink.

    Idempotent: calling again with settings that resolve to the same level
    leaves the handlers untouched.

    Returns:
        The loguru level name now in effect.
    """
    global _configured_level

    resolved = resolve_level(verbose, level)
    if _configured_level == resolved:
        return resolved

    logger.remove()
    logger.add(sys.stderr, level=resolved)
    _configured_level = resolved
    return resolved
