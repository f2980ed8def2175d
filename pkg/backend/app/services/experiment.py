"""
Experiment orchestration service.

``ExperimentRunner`` runs the preset named by a configuration, writes the
outputs and maps the outcome onto the process exit status.
"""

from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Optional

from app.core.exceptions import ConfigurationError, HeleShawError
from app.core.logging import LoggerMixin, run_context
from app.schemas.experiment import ExperimentConfig
from app.src.hele_shaw.dtn import DtnBackend

from .outputs import OutputPaths, emit_outputs
from .presets import StudyResult, run_preset


class ExitStatus(IntEnum):
    """Process exit codes."""

    OK = 0
    VIOLATIONS = 1
    FAILURE = 2
    CONFIG_ERROR = 3


@dataclass
class ExperimentOutcome:
    """Result, written files and exit status of one experiment."""

    status: ExitStatus
    result: Optional[StudyResult] = None
    paths: Optional[OutputPaths] = None
    message: Optional[str] = None


class ExperimentRunner(LoggerMixin):
    """
    Run one verification experiment end to end.

    Example:
        >>> runner = ExperimentRunner(parse_config('{"preset": "identities"}'))
        >>> outcome = runner.execute()
        >>> outcome.status
        <ExitStatus.OK: 0>
    """

    def __init__(self, config: ExperimentConfig, output_dir: Optional[Path] = None) -> None:
        self.config = config
        self.output_dir = Path(output_dir or config.output_dir)

    def run(self) -> StudyResult:
        """Run the configured preset without writing files."""
        self.logger.info(
            "experiment_started",
            preset=self.config.preset,
            dimension=self.config.dimension,
            points=self.config.points,
            backend=DtnBackend(self.config.dtn.backend).value,
        )
        return run_preset(self.config)

    def status_for(self, result: StudyResult) -> ExitStatus:
        if result.truncated:
            return ExitStatus.FAILURE
        if result.violation_count > 0:
            return ExitStatus.VIOLATIONS
        return ExitStatus.OK

    def execute(self) -> ExperimentOutcome:
        """
        Run the preset and write its outputs.

        Solver and I/O failures are reported through the returned status;
        a truncated run still writes its partial outputs.
        """
        with run_context(config_sha256=self.config.config_hash()[:12], preset=self.config.preset):
            return self._execute()

    def _execute(self) -> ExperimentOutcome:
        try:
            result = self.run()
        except ConfigurationError as exc:
            self.logger.error("experiment_config_error", error=str(exc))
            return ExperimentOutcome(status=ExitStatus.CONFIG_ERROR, message=str(exc))
        except HeleShawError as exc:
            self.logger.error("experiment_failed", error=str(exc), exc_info=True)
            return ExperimentOutcome(status=ExitStatus.FAILURE, message=str(exc))

        try:
            paths = emit_outputs(result, self.config, self.output_dir)
        except (OSError, ValueError) as exc:
            self.logger.error("output_write_failed", error=str(exc))
            return ExperimentOutcome(status=ExitStatus.FAILURE, result=result, message=str(exc))

        status = self.status_for(result)
        self.logger.info(
            "experiment_completed",
            preset=result.preset,
            status=status.name,
            violations=result.violation_count,
            truncated=result.truncated,
            output_dir=str(self.output_dir),
        )
        return ExperimentOutcome(status=status, result=result, paths=paths, message=result.error)


def run_experiment(config: ExperimentConfig, output_dir: Optional[Path] = None) -> int:
    """
    Run an experiment and return its exit status.

    Returns:
        0 ok, 1 acceptance violations, 2 solver or I/O failure, 3 configuration error
    """
    return int(ExperimentRunner(config, output_dir).execute().status)
