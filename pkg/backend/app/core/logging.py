"""
Logging configuration for the Hele-Shaw verification harness.

Structured logs go to stderr so that data written by the CLI is never
interleaved with them. Values bound with ``run_context`` (config hash,
preset) are attached to every event emitted while a run is active.
"""

import functools
import logging
import sys
import time
from contextlib import contextmanager
from typing import Any, Iterator, List, Optional

import structlog

from .config import get_settings


def _processors(log_format: str) -> List[Any]:
    renderer = (
        structlog.processors.JSONRenderer(sort_keys=True)
        if log_format == "json"
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    return [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.filter_by_level,
        structlog.stdlib.add_logger_name,
        structlog.stdlib.add_log_level,
        structlog.processors.TimeStamper(fmt="iso"),
        structlog.processors.StackInfoRenderer(),
        structlog.processors.format_exc_info,
        renderer,
    ]


def configure_logging(level: Optional[str] = None, log_format: Optional[str] = None) -> None:
    """Configure structured logging for the process.

    Args:
        level: Log level override (defaults to settings)
        log_format: ``json`` or ``console`` override (defaults to settings)
    """
    settings = get_settings()
    level = (level or settings.log_level).upper()

    structlog.configure(
        processors=_processors(log_format or settings.log_format),
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )
    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=getattr(logging, level),
        force=True,
    )


@contextmanager
def run_context(**values: Any) -> Iterator[None]:
    """Bind ``values`` to every log event emitted inside the block."""
    with structlog.contextvars.bound_contextvars(**values):
        yield


class LoggerMixin:
    """Mixin giving a class a logger named after it."""

    @property
    def logger(self) -> structlog.stdlib.BoundLogger:
        return structlog.get_logger(self.__class__.__name__)


def get_logger(name: Optional[str] = None) -> structlog.stdlib.BoundLogger:
    """Get a structured logger instance."""
    return structlog.get_logger(name)


def log_function_call(func):
    """Log entry, duration and failure of a long-running stage.

    Arguments are not logged: they are fields and configs that would swamp
    the log.
    """

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        logger = get_logger(func.__module__)
        logger.debug("stage_started", stage=func.__name__)
        started = time.perf_counter()
        try:
            result = func(*args, **kwargs)
        except Exception as e:
            logger.error(
                "stage_failed",
                stage=func.__name__,
                error=str(e),
                elapsed_s=round(time.perf_counter() - started, 3),
            )
            raise
        logger.debug(
            "stage_completed",
            stage=func.__name__,
            elapsed_s=round(time.perf_counter() - started, 3),
        )
        return result

    return wrapper
