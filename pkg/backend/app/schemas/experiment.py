"""
Experiment configuration schemas.

An experiment is described by a JSON object (file or inline text) validated
against ``ExperimentConfig``. Unknown keys are errors. Values are layered:
model defaults < preset defaults < file values < command-line overrides.
"""

import hashlib
import json
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import Field, ValidationError, field_validator, model_validator

from app.core.config import get_settings
from app.core.exceptions import ConfigurationError
from app.src.hele_shaw.diagnostics import HOOK_NAMES
from app.src.hele_shaw.dtn import DtnConfig
from app.src.hele_shaw.dynamics import StepperConfig
from app.src.hele_shaw.functionals import CORDOBA_SUITE, FUNCTIONALS, LYAPUNOV_SUITE
from app.src.hele_shaw.grid import Field as GridField
from app.src.hele_shaw.grid import TorusGrid, build_grid

from .common import BaseSchema, deep_merge, format_validation_errors

AMPLITUDE_LIMIT = 0.3


class Preset(str, Enum):
    """Named verification studies."""

    LYAPUNOV = "lyapunov"
    ELLIPTIC = "elliptic"
    ENTROPY = "entropy"
    CONVERGENCE = "convergence"
    IDENTITIES = "identities"


class ModeSpec(BaseSchema):
    """One Fourier component amplitude * cos(k . x + phase)."""

    mode: List[int] = Field(..., min_length=1, max_length=2, description="Wavevector k")
    amplitude: float = Field(..., description="Amplitude")
    phase: float = Field(default=0.0, description="Phase in radians")


class RandomSpectrum(BaseSchema):
    """Seeded random band-limited component, scaled to the given max amplitude."""

    amplitude: float = Field(..., ge=0.0, description="max|h| of the random part")
    decay: float = Field(default=2.0, ge=0.0, description="Spectral decay exponent")
    max_mode: int = Field(default=8, ge=1, le=64, description="Largest |k_i| used")


class InitialCondition(BaseSchema):
    """Initial surface h0 as a sum of modes plus an optional random spectrum."""

    modes: List[ModeSpec] = Field(
        default_factory=lambda: [ModeSpec(mode=[1], amplitude=0.1)],
        description="Deterministic Fourier components",
    )
    random: Optional[RandomSpectrum] = Field(None, description="Random component")

    @property
    def total_amplitude(self) -> float:
        total = sum(abs(m.amplitude) for m in self.modes)
        return total + (self.random.amplitude if self.random else 0.0)


class DiagnosticsSelection(BaseSchema):
    """Diagnostics evaluated along a run."""

    names: List[str] = Field(
        default_factory=lambda: ["lyapunov", "dissipation", "min_a"],
        description="Hooks to evaluate",
    )
    stride: int = Field(default=10, ge=0, description="Record every stride steps; 0 = ends only")
    functionals: List[str] = Field(default_factory=lambda: list(LYAPUNOV_SUITE))
    cordoba_functionals: List[str] = Field(default_factory=lambda: list(CORDOBA_SUITE))
    entropy_m: List[float] = Field(default_factory=lambda: [1.0, 10.0], min_length=1)
    workers: Optional[int] = Field(None, ge=1, le=64, description="Hook threads")

    @field_validator("names")
    @classmethod
    def validate_names(cls, v):
        """Validate diagnostic names."""
        unknown = [name for name in v if name not in HOOK_NAMES]
        if unknown:
            raise ValueError(f"unknown diagnostics {unknown}; available: {list(HOOK_NAMES)}")
        return v

    @field_validator("functionals", "cordoba_functionals")
    @classmethod
    def validate_functionals(cls, v):
        """Validate functional names."""
        unknown = [name for name in v if name not in FUNCTIONALS]
        if unknown:
            raise ValueError(f"unknown functionals {unknown}; available: {sorted(FUNCTIONALS)}")
        return v

    @field_validator("entropy_m")
    @classmethod
    def validate_entropy_m(cls, v):
        """Validate entropy constants."""
        if any(not m > 0.0 for m in v):
            raise ValueError("entropy constants m must be positive")
        return v


class StudySettings(BaseSchema):
    """Preset-specific knobs."""

    refinement_levels: int = Field(
        default=3, ge=2, le=3, description="Elliptic levels: coarse, reference, doubled"
    )
    backend_orders: List[int] = Field(default_factory=lambda: [6, 8], min_length=1)
    backend_samples: int = Field(default=20, ge=1, le=200)
    sample_amplitude: float = Field(default=0.1, gt=0.0, le=AMPLITUDE_LIMIT)
    reference_dt: float = Field(default=1e-4, gt=0.0, description="rk4 reference step")
    epsilons: List[float] = Field(default_factory=lambda: [1e-3, 1e-4], min_length=2)
    tolerance: float = Field(default=1e-5, gt=0.0, description="Sign-check tolerance")
    sign_refinement: bool = Field(default=True, description="Rerun the sign suite at 2N")

    @field_validator("backend_orders")
    @classmethod
    def validate_orders(cls, v):
        """Validate expansion orders."""
        if any(not 1 <= order <= 12 for order in v):
            raise ValueError("expansion orders must lie in [1, 12]")
        return v


class ExperimentConfig(BaseSchema):
    """
    Complete description of one verification experiment.

    Attributes:
        preset: Study to run
        dimension: 1 or 2
        points: Grid points per axis
        initial: Initial surface
        dtn: Dirichlet-to-Neumann settings
        stepper: Time stepping settings
        diagnostics: Hooks, stride and functionals
        study: Preset-specific knobs
        output_dir: Directory receiving the output files
        seed: Seed of every random draw
        override_amplitude: Allow initial amplitude above 0.3
    """

    preset: Preset = Field(default=Preset.LYAPUNOV, description="Study to run")
    dimension: int = Field(default=1, ge=1, le=2, description="Torus dimension")
    points: int = Field(default=256, ge=8, le=4096, description="Points per axis")
    initial: InitialCondition = Field(default_factory=InitialCondition)
    dtn: DtnConfig = Field(default_factory=DtnConfig)
    stepper: StepperConfig = Field(default_factory=StepperConfig)
    diagnostics: DiagnosticsSelection = Field(default_factory=DiagnosticsSelection)
    study: StudySettings = Field(default_factory=StudySettings)
    output_dir: str = Field(default_factory=lambda: get_settings().default_output_dir)
    seed: int = Field(default=0, ge=0, description="Random seed")
    override_amplitude: bool = Field(default=False, description="Lift the amplitude guard")

    @field_validator("points")
    @classmethod
    def validate_points(cls, v):
        """Validate the point count is even."""
        if v % 2:
            raise ValueError("points must be even")
        return v

    @model_validator(mode="after")
    def validate_initial(self) -> "ExperimentConfig":
        """Check mode vectors against the dimension and the amplitude guard, all at once."""
        problems = []
        for position, spec in enumerate(self.initial.modes):
            if len(spec.mode) > self.dimension:
                problems.append(
                    f"initial.modes.{position}: wavevector {spec.mode} has more components "
                    f"than dimension {self.dimension}"
                )
            if any(abs(k) > self.points // 2 - 1 for k in spec.mode):
                problems.append(
                    f"initial.modes.{position}: wavevector {spec.mode} is not resolved "
                    f"by {self.points} points"
                )
        amplitude = self.initial.total_amplitude
        if amplitude > AMPLITUDE_LIMIT and not self.override_amplitude:
            problems.append(
                f"initial: total amplitude {amplitude:g} exceeds {AMPLITUDE_LIMIT}; "
                "set override_amplitude to proceed"
            )
        if problems:
            raise ValueError("\n".join(problems))
        return self

    @property
    def hook_workers(self) -> int:
        workers = self.diagnostics.workers
        return workers if workers is not None else get_settings().diagnostic_workers

    def build_grid(self, points: Optional[int] = None) -> TorusGrid:
        return build_grid(self.dimension, points or self.points)

    def initial_surface(self, grid: Optional[TorusGrid] = None) -> GridField:
        """
        Sample h0 on ``grid`` (defaults to the configured grid).

        The random component is drawn from ``numpy.random.default_rng(seed)``
        in spectral space and rescaled to the requested max amplitude.
        """
        grid = grid or self.build_grid()
        values = np.zeros(grid.shape)
        for spec in self.initial.modes:
            k = list(spec.mode) + [0] * (grid.dim - len(spec.mode))
            phase = sum(ki * xi for ki, xi in zip(k, grid.mesh))
            values = values + spec.amplitude * np.cos(phase + spec.phase)
        if self.initial.random is not None and self.initial.random.amplitude > 0.0:
            values = values + random_surface(grid, self.initial.random, self.seed).values
        return GridField(grid, values)

    def config_hash(self) -> str:
        """sha256 of the canonical JSON form, output location excluded."""
        payload = self.model_dump(mode="json", exclude={"output_dir"})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def random_surface(grid: TorusGrid, spec: RandomSpectrum, seed: int) -> GridField:
    """
    Seeded random band-limited field with max|f| = ``spec.amplitude``.

    Coefficients are drawn for every mode with 1 <= max|k_i| <= max_mode and
    weighted by (1 + |k|)^(-decay); the zero mode is left out. The draws only
    depend on the mode set, so a seed gives the same function on every grid
    with N >= 3 max_mode.
    """
    rng = np.random.default_rng(seed)
    limit = min(spec.max_mode, grid.points_per_axis // 3)
    values = np.zeros(grid.shape)
    span = range(-limit, limit + 1)
    wavevectors = [(k,) for k in span] if grid.dim == 1 else [(k, l) for k in span for l in span]
    for k in wavevectors:
        if max(abs(c) for c in k) == 0:
            continue
        weight = (1.0 + float(np.sqrt(sum(c * c for c in k)))) ** (-spec.decay)
        amplitude, phase = weight * rng.standard_normal(), 2.0 * np.pi * rng.random()
        values = values + amplitude * np.cos(sum(c * x for c, x in zip(k, grid.mesh)) + phase)
    peak = float(np.max(np.abs(values)))
    if peak == 0.0:
        return GridField.zeros(grid)
    return GridField(grid, spec.amplitude * values / peak)


# Layer applied between the model defaults and the file values.
PRESET_DEFAULTS: Dict[str, Dict[str, Any]] = {
    Preset.LYAPUNOV.value: {
        "diagnostics": {
            "names": ["lyapunov", "dissipation", "min_a"],
            "functionals": ["square", "exp", "cosh", "quartic"],
            "stride": 10,
        },
    },
    Preset.ELLIPTIC.value: {
        "initial": {"modes": [{"mode": [1], "amplitude": 0.05}]},
        "diagnostics": {"names": ["elliptic_residual"], "stride": 0},
    },
    Preset.ENTROPY.value: {
        "initial": {"modes": [{"mode": [1], "amplitude": 0.05}]},
        "diagnostics": {
            "names": ["min_a", "gamma", "cordoba", "entropy", "l2_identity"],
            "stride": 50,
        },
    },
    Preset.CONVERGENCE.value: {
        "stepper": {"t_end": 0.5},
        "diagnostics": {"names": [], "stride": 0},
    },
    Preset.IDENTITIES.value: {
        "diagnostics": {"names": [], "stride": 0},
    },
}


def _load_source(source: Union[str, Path]) -> Dict[str, Any]:
    if isinstance(source, Path):
        text, origin = _read_file(source), str(source)
    elif source.lstrip().startswith("{"):
        text, origin = source, "inline"
    else:
        text, origin = _read_file(Path(source)), source
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            [f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"], origin
        ) from exc
    if not isinstance(data, dict):
        raise ConfigurationError(["top level must be a JSON object"], origin)
    return data


def _read_file(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError([f"cannot read config file: {exc}"], str(path)) from exc


def parse_config(
    source: Optional[Union[str, Path]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> ExperimentConfig:
    """
    Build a validated experiment configuration.

    Args:
        source: Path to a JSON file, inline JSON text, or None for defaults
        overrides: Values applied last (command-line flags)

    Returns:
        Validated configuration

    Raises:
        ConfigurationError: Listing every violation found
    """
    data = _load_source(source) if source is not None else {}
    overrides = overrides or {}
    preset = overrides.get("preset", data.get("preset", Preset.LYAPUNOV.value))
    layered = deep_merge(PRESET_DEFAULTS.get(str(preset), {}), data)
    layered = deep_merge(layered, overrides)
    try:
        return ExperimentConfig.model_validate(layered)
    except ValidationError as exc:
        origin = None
        if source is not None:
            origin = "inline" if str(source).lstrip().startswith("{") else str(source)
        raise ConfigurationError(format_validation_errors(exc), origin) from exc
