"""
Core package for the Hele-Shaw verification harness

This package contains core functionality: configuration, structured
logging and the exception hierarchy.
"""

from app.core.config import get_settings, settings
from app.core.logging import configure_logging, get_logger

__all__ = ["settings", "get_settings", "configure_logging", "get_logger"]
