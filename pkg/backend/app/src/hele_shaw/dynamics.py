"""
Time integration of the Hele-Shaw flow d_t h + G(h)h = 0 on the torus.

Key Features:
- ``semi_implicit``: |D| treated implicitly, G(h)h - |D|h explicitly
- ``rk4``: classical four-stage scheme, sub-stepped under a CFL bound
- Adaptive step doubling with a local error tolerance
- Mean of h kept to round-off by projecting the mean out of every increment
- Blow-up detection returning the last valid state
- ``run`` with diagnostic hooks, optionally evaluated on a thread pool
"""

import math
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as PydanticField, model_validator

from app.core.exceptions import (
    BackendValidityError,
    HeleShawError,
    NonFiniteFieldError,
    SolverBlowUpError,
    SolverConvergenceError,
    TimeStepUnderflowError,
)
from app.core.logging import get_logger

from .dtn import DtnConfig, dtn_apply, shape_derivative, trace_v
from .grid import Field, abs_derivative, check_finite
from .records import DiagnosticsRecord

logger = get_logger(__name__)

Hook = Callable[["SimState", DtnConfig], Dict[str, Any]]

# Relative slack when deciding whether t_end has been reached.
_TIME_EPS = 1e-12


class SteppingScheme(str, Enum):
    """Time stepping schemes."""

    SEMI_IMPLICIT = "semi_implicit"
    RK4 = "rk4"


class StepperConfig(BaseModel):
    """Immutable time stepping settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    scheme: SteppingScheme = PydanticField(default=SteppingScheme.SEMI_IMPLICIT)
    dt: float = PydanticField(default=1e-3, gt=0.0, description="Time step")
    t_end: float = PydanticField(default=1.0, gt=0.0, description="Final time")
    cfl_safety: float = PydanticField(default=0.5, gt=0.0, le=1.0)
    adaptive: bool = PydanticField(default=False, description="Step doubling control")
    tolerance: float = PydanticField(default=1e-8, gt=0.0, description="Adaptive local error")
    dt_min: float = PydanticField(default=1e-9, gt=0.0, description="Adaptive step floor")
    blow_up_threshold: float = PydanticField(default=50.0, gt=0.0)

    @model_validator(mode="after")
    def validate_step(self) -> "StepperConfig":
        """Validate dt against t_end and the adaptive floor."""
        if self.dt > self.t_end:
            raise ValueError(f"dt ({self.dt}) must not exceed t_end ({self.t_end})")
        if self.adaptive and self.dt_min > self.dt:
            raise ValueError("dt_min must not exceed dt")
        return self


@dataclass(frozen=True)
class SimState:
    """
    Time and surface elevation.

    Attributes:
        t: Time, non-negative
        h: Surface elevation
    """

    t: float
    h: Field

    def __post_init__(self) -> None:
        if not self.t >= 0.0:
            raise ValueError(f"time must be non-negative, got {self.t}")
        check_finite(self.h, "h")


@dataclass
class RunResult:
    """
    Outcome of ``run``.

    Attributes:
        records: Diagnostics time series
        final_state: Last valid state
        truncated: True when the run stopped before t_end
        error: Failure message of a truncated run
        steps: Accepted steps
    """

    records: List[DiagnosticsRecord]
    final_state: SimState
    truncated: bool = False
    error: Optional[str] = None
    steps: int = 0
    step_sizes: List[float] = field(default_factory=list)


def rhs(state: SimState, cfg: DtnConfig) -> Field:
    """-G(h)h."""
    return -dtn_apply(state.h, state.h, cfg)


def _project_increment(h: Field, increment: Field) -> Field:
    return h + (increment - increment.mean())


def semi_implicit_step(state: SimState, dt: float, cfg: DtnConfig) -> SimState:
    """
    One linearly implicit step.

    h^{n+1} = (I + dt|D|)^{-1} (h^n - dt [G(h^n)h^n - |D|h^n]) in Fourier space.
    """
    h = state.h
    grid = h.grid
    explicit = dtn_apply(h, h, cfg) - abs_derivative(h)
    coefficients = (h.spectral - dt * explicit.spectral) / (1.0 + dt * grid.abs_wavenumber)
    # The zero mode of the update is dropped: the exact flow conserves it.
    coefficients[(0,) * grid.dim] = h.spectral[(0,) * grid.dim]
    updated = Field.from_spectral(grid, coefficients)
    return SimState(t=state.t + dt, h=_project_increment(h, updated - h))


def cfl_time_step(state: SimState, sc: StepperConfig, cfg: DtnConfig) -> float:
    """dt bound cfl_safety * dx / max(1, max|V|) with V = V(h)h."""
    velocity = trace_v(state.h, state.h, cfg)
    speed = max(component.linf_norm() for component in velocity)
    return sc.cfl_safety * state.h.grid.spacing / max(1.0, speed)


def _rk4_substep(h: Field, dt: float, cfg: DtnConfig) -> Field:
    def f(u: Field) -> Field:
        return -dtn_apply(u, u, cfg)

    k1 = f(h)
    k2 = f(h + 0.5 * dt * k1)
    k3 = f(h + 0.5 * dt * k2)
    k4 = f(h + dt * k3)
    return _project_increment(h, (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def rk4_step(state: SimState, dt: float, sc: StepperConfig, cfg: DtnConfig) -> SimState:
    """Classical RK4 over ``dt``, split into equal sub-steps honouring the CFL bound."""
    substeps = max(1, math.ceil(dt / cfl_time_step(state, sc, cfg) - _TIME_EPS))
    h = state.h
    for _ in range(substeps):
        h = _rk4_substep(h, dt / substeps, cfg)
        check_finite(h, "h")
    return SimState(t=state.t + dt, h=h)


def _check_blow_up(candidate: Field, last: SimState, sc: StepperConfig) -> None:
    if not candidate.is_finite():
        raise SolverBlowUpError(f"non-finite surface after t={last.t:.6g}", last)
    peak = candidate.linf_norm()
    if peak > sc.blow_up_threshold:
        raise SolverBlowUpError(
            f"max|h| = {peak:.3e} exceeds {sc.blow_up_threshold} after t={last.t:.6g}", last
        )


def _fixed_step(state: SimState, dt: float, sc: StepperConfig, cfg: DtnConfig) -> SimState:
    try:
        if SteppingScheme(sc.scheme) == SteppingScheme.RK4:
            updated = rk4_step(state, dt, sc, cfg)
        else:
            updated = semi_implicit_step(state, dt, cfg)
    except NonFiniteFieldError as exc:
        raise SolverBlowUpError(str(exc), state) from exc
    _check_blow_up(updated.h, state, sc)
    return updated


def adaptive_step(
    state: SimState, dt: float, sc: StepperConfig, cfg: DtnConfig
) -> Tuple[SimState, float, float]:
    """
    Step doubling: compare one step of ``dt`` with two of ``dt / 2``.

    Returns:
        (accepted state, step actually taken, proposal for the next step)

    Raises:
        TimeStepUnderflowError: If the step falls below ``sc.dt_min``
    """
    while True:
        if dt < sc.dt_min:
            raise TimeStepUnderflowError(
                f"adaptive step {dt:.3e} fell below dt_min={sc.dt_min:.3e} at t={state.t:.6g}"
            )
        coarse = _fixed_step(state, dt, sc, cfg)
        half = _fixed_step(state, 0.5 * dt, sc, cfg)
        fine = _fixed_step(half, 0.5 * dt, sc, cfg)
        error = (fine.h - coarse.h).linf_norm()
        if error <= sc.tolerance:
            proposal = 2.0 * dt if error < sc.tolerance / 8.0 else dt
            return fine, dt, min(proposal, sc.dt)
        logger.debug("adaptive_step_rejected", t=state.t, dt=dt, error=error)
        dt *= 0.5


def step(
    state: SimState, sc: StepperConfig, cfg: DtnConfig, dt: Optional[float] = None
) -> SimState:
    """
    Advance ``state`` by one step of the configured scheme.

    Args:
        state: Current state
        sc: Stepper settings
        cfg: Dirichlet-to-Neumann settings
        dt: Step size (defaults to ``sc.dt``)

    Returns:
        The new state

    Raises:
        SolverBlowUpError: On NaN or max|h| above the blow-up threshold
        TimeStepUnderflowError: If adaptive control underflows
    """
    dt = sc.dt if dt is None else dt
    if sc.adaptive:
        return adaptive_step(state, dt, sc, cfg)[0]
    return _fixed_step(state, dt, sc, cfg)


def second_time_derivative(state: SimState, cfg: DtnConfig) -> Field:
    """
    d_t^2 h evaluated exactly in space.

    With w = d_t h = -G(h)h: d_t^2 h = -dG(h)h . w - G(h)w.
    """
    h = state.h
    velocity = -dtn_apply(h, h, cfg)
    return -shape_derivative(h, h, velocity, cfg) - dtn_apply(h, velocity, cfg)


def _surface_record(state: SimState) -> DiagnosticsRecord:
    h = state.h
    return DiagnosticsRecord(t=state.t, h_mean=h.mean(), h_l2=h.l2_norm(), h_linf=h.linf_norm())


def snapshot_record(
    state: SimState,
    cfg: DtnConfig,
    hooks: Sequence[Hook] = (),
    executor: Optional[Executor] = None,
) -> DiagnosticsRecord:
    """Evaluate the hooks on one state; outputs are merged in hook order."""
    record = _surface_record(state)
    if executor is not None and len(hooks) > 1:
        outputs = list(executor.map(lambda hook: hook(state, cfg), hooks))
    else:
        outputs = [hook(state, cfg) for hook in hooks]
    for output in outputs:
        record.update(output)
    return record


def _done(state: SimState, sc: StepperConfig) -> bool:
    return sc.t_end - state.t <= _TIME_EPS * max(1.0, sc.t_end)


def run(
    h0: Field,
    sc: StepperConfig,
    cfg: DtnConfig,
    hooks: Sequence[Hook] = (),
    stride: int = 1,
    workers: int = 1,
) -> RunResult:
    """
    Integrate from h0 at t = 0 to ``sc.t_end``.

    Args:
        h0: Initial surface
        sc: Stepper settings
        cfg: Dirichlet-to-Neumann settings
        hooks: Diagnostic callbacks ``hook(state, cfg) -> dict``
        stride: Record every ``stride`` steps; 0 records only t = 0 and t_end.
            The final state is always recorded.
        workers: Threads used to evaluate hooks on a snapshot

    Returns:
        RunResult; on blow-up, solver failure or a failing hook the series is
        partial and ``truncated`` is set. A failing snapshot keeps only h statistics.
    """
    if stride < 0:
        raise ValueError(f"stride must be non-negative, got {stride}")
    state = SimState(t=0.0, h=h0)
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    logger.info(
        "run_started",
        scheme=SteppingScheme(sc.scheme).value,
        dt=sc.dt,
        t_end=sc.t_end,
        hooks=len(hooks),
        stride=stride,
    )
    records: List[DiagnosticsRecord] = []
    result = RunResult(records=records, final_state=state)

    def record(snapshot: SimState) -> bool:
        try:
            records.append(snapshot_record(snapshot, cfg, hooks, executor))
        except HeleShawError as exc:
            logger.warning("diagnostics_failed", t=snapshot.t, error=str(exc))
            records.append(_surface_record(snapshot))
            result.truncated, result.error = True, str(exc)
            return False
        return True

    try:
        dt = sc.dt
        running = record(state)
        while running and not _done(state, sc):
            trial = min(dt, sc.t_end - state.t)
            try:
                if sc.adaptive:
                    state, taken, dt = adaptive_step(state, trial, sc, cfg)
                else:
                    state, taken = _fixed_step(state, trial, sc, cfg), trial
            except SolverBlowUpError as exc:
                logger.warning("blow_up_detected", t=state.t, error=str(exc))
                result.truncated, result.error = True, str(exc)
                break
            except (
                SolverConvergenceError,
                TimeStepUnderflowError,
                BackendValidityError,
            ) as exc:
                logger.warning("run_aborted", t=state.t, error=str(exc))
                result.truncated, result.error = True, str(exc)
                break
            result.steps += 1
            result.step_sizes.append(taken)
            result.final_state = state
            if _done(state, sc) or (stride > 0 and result.steps % stride == 0):
                running = record(state)
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    logger.info(
        "run_completed",
        steps=result.steps,
        t=result.final_state.t,
        records=len(records),
        truncated=result.truncated,
    )
    return result


def linear_decay_rate(h0: Field, h1: Field, elapsed: float, mode: Tuple[int, ...]) -> float:
    """Observed exponential decay rate of one Fourier mode between two surfaces."""
    index = tuple(int(k) % h0.grid.points_per_axis for k in mode)
    start = abs(h0.spectral[index])
    end = abs(h1.spectral[index])
    if start == 0.0 or end == 0.0:
        raise ValueError(f"mode {mode} is absent from the surface")
    return float(np.log(start / end) / elapsed)
