"""Logging setup.

All log records go to stderr; stdout carries command output only.
"""

import sys

from loguru import logger
from rich.logging import RichHandler

from .enums import LogFormat
from .ui import errConsole


def _stderrSink(message: str) -> None:
    sys.stderr.write(message)


def resolveLevel(logLevel: str, quiet: bool = False) -> str:
    """Validated loguru level name; quiet raises it to ERROR."""
    if quiet:
        return "ERROR"
    level = logLevel.upper()
    try:
        logger.level(level)
    except ValueError:
        raise ValueError(f"Invalid log level: {logLevel}") from None
    return level


def setupLogging(
    logFormat: LogFormat = LogFormat.PRETTY,
    logLevel: str = "INFO",
    quiet: bool = False,
) -> int:
    """
    Replace loguru's default sink with a stderr sink.

    Args:
        logFormat: PRETTY renders through rich, JSON emits one object per line
        logLevel: Minimum level name
        quiet: Only report errors

    Returns:
        Id of the installed sink
    """
    level = resolveLevel(logLevel, quiet)
    logger.remove()

    if logFormat == LogFormat.PRETTY:
        handler = RichHandler(
            console=errConsole,
            show_time=True,
            show_path=False,
            rich_tracebacks=True,
        )
        return logger.add(handler, level=level, format="{message}")

    return logger.add(_stderrSink, level=level, serialize=True)
