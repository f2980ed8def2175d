"""
Services package for the Hele-Shaw verification harness

This package contains experiment orchestration, the preset studies and output emission.
"""

from app.services.experiment import ExitStatus, ExperimentRunner, run_experiment
from app.services.outputs import OutputPaths, emit_outputs
from app.services.presets import PRESET_RUNNERS, StudyResult, run_preset

__all__ = [
    "ExitStatus",
    "ExperimentRunner",
    "OutputPaths",
    "PRESET_RUNNERS",
    "StudyResult",
    "emit_outputs",
    "run_experiment",
    "run_preset",
]
