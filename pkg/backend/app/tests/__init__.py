"""
Tests package for the Hele-Shaw verification harness

This package contains all test cases for the Hele-Shaw verification harness.
"""

import pytest
from app.core.config import settings

# Configure test settings
settings.environment = "testing"

__all__ = ["pytest", "settings"]
