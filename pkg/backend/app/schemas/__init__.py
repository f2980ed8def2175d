"""
Schemas package for the Hele-Shaw verification harness

This package contains the Pydantic schemas validating experiment configuration.
"""

from app.schemas.common import BaseSchema, format_validation_errors
from app.schemas.experiment import (
    DiagnosticsSelection,
    ExperimentConfig,
    InitialCondition,
    ModeSpec,
    Preset,
    RandomSpectrum,
    StudySettings,
    parse_config,
)

__all__ = [
    "BaseSchema",
    "DiagnosticsSelection",
    "ExperimentConfig",
    "InitialCondition",
    "ModeSpec",
    "Preset",
    "RandomSpectrum",
    "StudySettings",
    "format_validation_errors",
    "parse_config",
]
