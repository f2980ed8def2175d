"""
File emission for verification experiments.

Outputs are deterministic: no wall-clock data, floats written with ``repr``,
JSON with sorted keys and LF line endings, so rerunning a configuration
reproduces every file byte for byte.

Files:
    timeseries.csv: One row per DiagnosticsRecord, header first
    study.csv: Preset table (only when the preset produced one)
    snapshot.txt: Final surface as a plain-text table with a comment header
    summary.json: Violation counts and min/max of each monitored quantity
"""

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from app.schemas.experiment import ExperimentConfig
from app.src.hele_shaw.dynamics import SimState
from app.src.hele_shaw.records import (
    MISSING,
    SCALAR_COLUMNS,
    DiagnosticsRecord,
    format_value,
    column_layout,
)

from .presets import StudyResult

TIMESERIES_FILE = "timeseries.csv"
STUDY_FILE = "study.csv"
SNAPSHOT_FILE = "snapshot.txt"
SUMMARY_FILE = "summary.json"


@dataclass(frozen=True)
class OutputPaths:
    """Files written by ``emit_outputs``."""

    timeseries: Path
    snapshot: Optional[Path]
    summary: Path
    study: Optional[Path] = None


def _format_cell(value: Any) -> str:
    if value is None:
        return MISSING
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_value(float(value))
    return str(value)


def write_timeseries(records: Sequence[DiagnosticsRecord], path: Path) -> Path:
    """
    Write the diagnostics series as CSV.

    Raises:
        ValueError: If ``records`` is empty
    """
    if not records:
        raise ValueError("no diagnostics records to write")
    layout = column_layout(records)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(layout.header())
        for record in records:
            writer.writerow(record.to_row(layout))
    return path


def write_table(rows: Sequence[Dict[str, Any]], path: Path) -> Path:
    """Write study rows as CSV; columns in first-seen order, absent cells as NA."""
    columns: Dict[str, None] = {}
    for row in rows:
        columns.update(dict.fromkeys(row))
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(list(columns))
        for row in rows:
            writer.writerow([_format_cell(row.get(column)) for column in columns])
    return path


def write_snapshot(state: SimState, config: ExperimentConfig, path: Path) -> Path:
    """Write the surface as whitespace-separated columns (x [y] h) under a comment header."""
    grid = state.h.grid
    coordinates = ["x", "y"][: grid.dim]
    lines = [
        f"# config_sha256: {config.config_hash()}",
        f"# dimension: {grid.dim}",
        f"# points_per_axis: {grid.points_per_axis}",
        "# period: 2*pi",
        f"# t: {format_value(state.t)}",
        f"# columns: {' '.join(coordinates + ['h'])}",
    ]
    flat = [mesh.ravel() for mesh in grid.mesh] + [state.h.values.ravel()]
    for values in zip(*flat):
        lines.append(" ".join(format_value(v) for v in values))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def monitored_ranges(records: Sequence[DiagnosticsRecord]) -> Dict[str, Dict[str, float]]:
    """Min and max of every column present in the series."""
    columns: Dict[str, List[float]] = {}

    def collect(name: str, value: Optional[float]) -> None:
        if value is not None and math.isfinite(value):
            columns.setdefault(name, []).append(float(value))

    for record in records:
        for name in ("h_mean", "h_l2", "h_linf"):
            collect(name, getattr(record, name))
        for name, value in record.lyapunov.items():
            collect(f"I_{name}", value)
        for name, value in record.first_difference.items():
            collect(f"dI_{name}", value)
        for name, value in record.second_difference.items():
            collect(f"d2I_{name}", value)
        for name, value in record.dissipation.items():
            collect(f"D_{name}", value)
        for name in SCALAR_COLUMNS:
            collect(name, getattr(record, name))
    return {name: {"min": min(v), "max": max(v)} for name, v in columns.items()}


def build_summary(result: StudyResult, config: ExperimentConfig) -> Dict[str, Any]:
    final_time = result.final_state.t if result.final_state is not None else None
    return {
        "preset": result.preset,
        "config_sha256": config.config_hash(),
        "records": len(result.records),
        "final_time": final_time,
        "truncated": result.truncated,
        "error": result.error,
        "violations": dict(result.violations),
        "violation_count": result.violation_count,
        "monitored": monitored_ranges(result.records),
    }


def emit_outputs(
    result: StudyResult, config: ExperimentConfig, output_dir: Optional[Path] = None
) -> OutputPaths:
    """
    Write every output file of one experiment.

    Args:
        result: Study outcome
        config: Configuration, hashed into the snapshot and summary
        output_dir: Target directory (defaults to ``config.output_dir``)

    Returns:
        Paths of the files written

    Raises:
        ValueError: If the study has no records
        OSError: On I/O failures
    """
    if not result.records:
        raise ValueError("no diagnostics records to write")
    directory = Path(output_dir or config.output_dir)
    directory.mkdir(parents=True, exist_ok=True)

    timeseries = write_timeseries(result.records, directory / TIMESERIES_FILE)
    study = write_table(result.table, directory / STUDY_FILE) if result.table else None
    snapshot = None
    if result.final_state is not None:
        snapshot = write_snapshot(result.final_state, config, directory / SNAPSHOT_FILE)
    summary_path = directory / SUMMARY_FILE
    summary_path.write_text(
        json.dumps(build_summary(result, config), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    return OutputPaths(timeseries=timeseries, snapshot=snapshot, summary=summary_path, study=study)
