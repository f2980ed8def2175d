"""
Common schemas and base classes for the Hele-Shaw verification harness.

This module contains the strict Pydantic base class shared by every
configuration schema and the conversion of validation failures into
human-readable lines.
"""

from typing import Any, Dict, List

from pydantic import BaseModel, ConfigDict, ValidationError


class BaseSchema(BaseModel):
    """Base schema with common configuration. Unknown keys are rejected."""

    model_config = ConfigDict(
        populate_by_name=True,
        str_strip_whitespace=True,
        validate_assignment=True,
        use_enum_values=True,
        extra="forbid",
    )


def format_validation_errors(exc: ValidationError) -> List[str]:
    """
    Flatten a pydantic ``ValidationError`` into one line per violation.

    Args:
        exc: Validation error raised by a schema

    Returns:
        Lines of the form ``dotted.location: message``
    """
    lines = []
    for error in exc.errors():
        location = ".".join(str(part) for part in error["loc"])
        cause = error.get("ctx", {}).get("error")
        message = str(cause) if error["type"] == "value_error" and cause else error["msg"]
        for part in message.splitlines():
            lines.append(f"{location}: {part}" if location else part)
    return lines


def deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge ``update`` into a copy of ``base``; nested dicts merge, others replace."""
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged
