"""
Verification studies behind the experiment presets.

Each study takes a validated ``ExperimentConfig`` and returns a
``StudyResult``: the diagnostics time series, an optional study table,
acceptance violation counts and the final state.

Key Features:
- lyapunov: I_Phi monotonicity and time convexity, dissipation, min a
- elliptic: elliptic residual under (N, M) refinement with a two-form cross-check
- entropy: sign suite (min a, gamma, Cordoba gap, entropy residual, L2 identity)
- convergence: backend agreement, temporal convergence, linear mode decay
- identities: operator identity table including the shape-derivative oracle
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.logging import get_logger, log_function_call
from app.schemas.experiment import ExperimentConfig, Preset, RandomSpectrum, random_surface
from app.src.hele_shaw import diagnostics
from app.src.hele_shaw.dtn import (
    DtnBackend,
    adjoint_b,
    dtn_apply,
    shape_derivative,
    traces,
)
from app.src.hele_shaw.dynamics import (
    RunResult,
    SimState,
    SteppingScheme,
    linear_decay_rate,
    run,
    snapshot_record,
)
from app.src.hele_shaw.functionals import get_functional, get_functionals
from app.src.hele_shaw.grid import (
    Field,
    TorusGrid,
    divergence,
    dot,
    gradient,
    inner,
    laplacian,
)
from app.src.hele_shaw.records import DiagnosticsRecord

logger = get_logger(__name__)

ELLIPTIC_TOLERANCE = 1e-3
DISSIPATION_TOLERANCE = 1e-6
L2_IDENTITY_TOLERANCE = 1e-4
BACKEND_TOLERANCE = 1e-4
SCHEME_TOLERANCE = 1e-4
DECAY_TOLERANCE = 0.02
IDENTITY_TOLERANCE = 1e-8
DIVERGENCE_IDENTITY_TOLERANCE = 1e-4
SHAPE_ORDER_MINIMUM = 0.9
RESIDUAL_FLOOR = 1e-10
ELLIPTIC_MAX_ORDER = 8


@dataclass
class StudyResult:
    """
    Outcome of one preset.

    Attributes:
        preset: Preset name
        records: Diagnostics time series
        table: Study rows written to study.csv
        violations: Acceptance violation count per check
        final_state: Last valid state, if the study ran a simulation
        truncated: True when a run stopped early
        error: Failure message of a truncated run
    """

    preset: str
    records: List[DiagnosticsRecord]
    table: List[Dict[str, Any]] = field(default_factory=list)
    violations: Dict[str, int] = field(default_factory=dict)
    final_state: Optional[SimState] = None
    truncated: bool = False
    error: Optional[str] = None

    @property
    def violation_count(self) -> int:
        return sum(self.violations.values())

    def count(self, check: str, failures: int) -> None:
        self.violations[check] = self.violations.get(check, 0) + int(failures)


def _run(cfg: ExperimentConfig, h0: Optional[Field] = None) -> RunResult:
    selection = cfg.diagnostics
    hooks = diagnostics.build_hooks(
        selection.names,
        get_functionals(selection.functionals),
        get_functionals(selection.cordoba_functionals),
        selection.entropy_m,
    )
    initial = h0 if h0 is not None else cfg.initial_surface()
    return run(initial, cfg.stepper, cfg.dtn, hooks, selection.stride, cfg.hook_workers)


def _result_from_run(preset: Preset, outcome: RunResult) -> StudyResult:
    return StudyResult(
        preset=preset.value,
        records=outcome.records,
        final_state=outcome.final_state,
        truncated=outcome.truncated,
        error=outcome.error,
    )


def uniform_prefix(series: Sequence[Tuple[float, float]]) -> List[Tuple[float, float]]:
    """Longest leading part of ``series`` sampled at a uniform stride."""
    if len(series) < 3:
        return list(series)
    stride = series[1][0] - series[0][0]
    kept = list(series[:2])
    for previous, current in zip(series[1:], series[2:]):
        if abs((current[0] - previous[0]) - stride) > diagnostics.UNIFORM_STRIDE_TOLERANCE * stride:
            break
        kept.append(current)
    return kept


def _check_min_a(result: StudyResult) -> None:
    with_a = [r for r in result.records if r.min_a is not None]
    if not with_a:
        return
    result.count("min_a_positive", sum(1 for r in with_a if not r.min_a > 0.0))
    result.count("min_a_monotone", len(diagnostics.min_a_series(with_a)))


def lyapunov_study(cfg: ExperimentConfig) -> StudyResult:
    """Run the flow and check I_Phi, its differences and the dissipation series."""
    result = _result_from_run(Preset.LYAPUNOV, _run(cfg))
    for name in cfg.diagnostics.functionals:
        functional = get_functional(name)
        sampled = [r for r in result.records if name in r.lyapunov]
        series = uniform_prefix([(r.t, r.lyapunov[name]) for r in sampled])
        row: Dict[str, Any] = {"functional": name, "exploratory": functional.exploratory}
        if len(series) < 3:
            logger.warning("lyapunov_series_too_short", functional=name, samples=len(series))
            result.table.append(row)
            continue
        differences = diagnostics.lyapunov_differences(series)
        kept = sampled[: len(series)]
        for record, value in zip(kept[1:], differences.first):
            record.first_difference[name] = float(value)
        for record, value in zip(kept[1:-1], differences.second):
            record.second_difference[name] = float(value)
        row.update(
            samples=len(series),
            max_first_difference=float(differences.first.max()),
            min_second_difference=float(differences.second.min()),
            monotonicity_violations=len(differences.monotonicity_violations),
            convexity_violations=len(differences.convexity_violations),
        )
        if not functional.exploratory:
            result.count(f"monotonicity_{name}", len(differences.monotonicity_violations))
            if functional.dphi_convex:
                result.count(f"convexity_{name}", len(differences.convexity_violations))

        dissipation = uniform_prefix(
            [(r.t, r.dissipation[name]) for r in result.records if name in r.dissipation]
        )
        if len(dissipation) >= 2:
            increase = float(np.max(np.diff([value for _, value in dissipation])))
            row["max_dissipation_increase"] = increase
            if functional.dphi_convex and not functional.exploratory:
                result.count(f"dissipation_{name}", int(increase > DISSIPATION_TOLERANCE))
        result.table.append(row)
    _check_min_a(result)
    return result


def refinement_ladder(points: int, order: int, levels: int) -> List[Tuple[int, int]]:
    """
    (N, M) resolutions of the elliptic study.

    A coarse level (N/2, M-2) precedes the reference (N, M); a third level
    refines to (2N, M+2). Orders are capped at ``ELLIPTIC_MAX_ORDER`` and
    points at 4096.
    """
    ladder = [(max(points // 2, 8), max(order - 2, 1)), (points, order), (2 * points, order + 2)]
    return [(min(n, 4096), min(m, ELLIPTIC_MAX_ORDER)) for n, m in ladder[:levels]]


def refinement_holds(coarse: float, fine: float, floor: float = RESIDUAL_FLOOR) -> bool:
    """True when ``fine`` is at most half of ``coarse``, or both sit at the floor."""
    return fine <= max(coarse / 2.0, floor)


def elliptic_study(cfg: ExperimentConfig) -> StudyResult:
    """Relative elliptic residual at refined (N, M) levels."""
    hooks = diagnostics.build_hooks(cfg.diagnostics.names, [])
    base_state = SimState(t=0.0, h=cfg.initial_surface())
    result = StudyResult(
        preset=Preset.ELLIPTIC.value,
        records=[snapshot_record(base_state, cfg.dtn, hooks)],
        final_state=base_state,
    )
    previous: Optional[float] = None
    ladder = refinement_ladder(cfg.points, cfg.dtn.taylor_order, cfg.study.refinement_levels)
    for level, (points, order) in enumerate(ladder):
        dtn = cfg.dtn.model_copy(update={"taylor_order": order})
        state = SimState(t=0.0, h=cfg.initial_surface(cfg.build_grid(points)))
        residual = diagnostics.elliptic_residual(state, dtn)
        scale_norm = laplacian(state.h).l2_norm()
        relative = residual.l2_norm() / scale_norm if scale_norm > 0.0 else residual.l2_norm()
        adjoint_form, trace_form = diagnostics.elliptic_forcing_forms(state, dtn)
        refined = None if previous is None else refinement_holds(previous, relative)
        result.table.append(
            {
                "points": points,
                "taylor_order": order,
                "residual_l2": residual.l2_norm(),
                "relative_residual": relative,
                "forms_difference": (adjoint_form - trace_form).linf_norm(),
                "halved": refined,
            }
        )
        if level == 1:
            result.count("elliptic_residual", int(relative > ELLIPTIC_TOLERANCE))
        if refined is not None:
            result.count("elliptic_refinement", int(not refined))
        previous = relative
        logger.info("elliptic_level_done", points=points, taylor_order=order, relative=relative)
    return result


def violation_magnitudes(records: Sequence[DiagnosticsRecord]) -> Dict[str, float]:
    """
    Size of the worst sign violation per check over a series; zero when none.

    ``min_a`` measures how far the coefficient dips below its initial value.
    """
    series: Dict[str, Tuple[Callable[[DiagnosticsRecord], Optional[float]], float]] = {
        "max_gamma": (lambda r: r.max_gamma, 1.0),
        "cordoba_min_gap": (lambda r: r.cordoba_min_gap, -1.0),
        "entropy_min_residual": (lambda r: r.entropy_min_residual, -1.0),
    }
    magnitudes: Dict[str, float] = {}
    for check, (getter, sign) in series.items():
        values = [sign * v for v in map(getter, records) if v is not None]
        if values:
            magnitudes[check] = max(0.0, max(values))
    with_a = [r.min_a for r in records if r.min_a is not None]
    if with_a:
        magnitudes["min_a"] = max(0.0, with_a[0] - min(with_a))
    return magnitudes


def _sign_refinement(cfg: ExperimentConfig, result: StudyResult) -> None:
    fine_points = min(2 * cfg.points, 4096)
    fine = _run(cfg, cfg.initial_surface(cfg.build_grid(fine_points)))
    if fine.truncated:
        logger.warning("sign_refinement_truncated", points=fine_points, error=fine.error)
        result.truncated, result.error = True, fine.error
        return
    coarse_sizes = violation_magnitudes(result.records)
    fine_sizes = violation_magnitudes(fine.records)
    for check, coarse in coarse_sizes.items():
        if check not in fine_sizes:
            continue
        holds = refinement_holds(coarse, fine_sizes[check], cfg.study.tolerance)
        result.table.append(
            {
                "check": f"{check}_refinement",
                "worst": fine_sizes[check],
                "coarse": coarse,
                "points": fine_points,
                "violations": int(not holds),
            }
        )
        result.count(f"{check}_refinement", int(not holds))


def entropy_study(cfg: ExperimentConfig) -> StudyResult:
    """Run the flow with the sign suite and count violations beyond tolerance."""
    result = _result_from_run(Preset.ENTROPY, _run(cfg))
    tolerance = cfg.study.tolerance
    checks: Dict[str, Tuple[Callable[[DiagnosticsRecord], Optional[float]], str]] = {
        "max_gamma": (lambda r: r.max_gamma, "max"),
        "cordoba_min_gap": (lambda r: r.cordoba_min_gap, "min"),
        "entropy_min_residual": (lambda r: r.entropy_min_residual, "min"),
    }
    for check, (getter, sense) in checks.items():
        values = [v for v in map(getter, result.records) if v is not None]
        if not values:
            continue
        if sense == "max":
            worst, failures = max(values), sum(1 for v in values if v > tolerance)
        else:
            worst, failures = min(values), sum(1 for v in values if v < -tolerance)
        result.table.append(
            {"check": check, "worst": worst, "tolerance": tolerance, "violations": failures}
        )
        result.count(check, failures)

    gaps = [
        abs(r.l2_convexity_lhs - r.l2_convexity_rhs) / max(1.0, abs(r.l2_convexity_rhs))
        for r in result.records
        if r.l2_convexity_lhs is not None and r.l2_convexity_rhs is not None
    ]
    if gaps:
        failures = sum(1 for g in gaps if g > L2_IDENTITY_TOLERANCE)
        result.table.append(
            {
                "check": "l2_convexity_identity",
                "worst": max(gaps),
                "tolerance": L2_IDENTITY_TOLERANCE,
                "violations": failures,
            }
        )
        result.count("l2_convexity_identity", failures)
    _check_min_a(result)
    if cfg.study.sign_refinement and not result.truncated:
        _sign_refinement(cfg, result)
    return result


def _relative_l2(approximation: Field, reference: Field) -> float:
    norm = reference.l2_norm()
    difference = (approximation - reference).l2_norm()
    return difference / norm if norm > 0.0 else difference


def _backend_agreement(cfg: ExperimentConfig, grid: TorusGrid, result: StudyResult) -> None:
    spectrum = RandomSpectrum(amplitude=cfg.study.sample_amplitude)
    reference_cfg = cfg.dtn.model_copy(update={"backend": DtnBackend.ELLIPTIC})
    orders = cfg.study.backend_orders
    for sample in range(cfg.study.backend_samples):
        h = random_surface(grid, spectrum, cfg.seed + 2 * sample)
        psi = random_surface(grid, RandomSpectrum(amplitude=1.0), cfg.seed + 2 * sample + 1)
        reference = dtn_apply(h, psi, reference_cfg)
        errors = []
        for order in orders:
            expansion_cfg = cfg.dtn.model_copy(
                update={"backend": DtnBackend.TAYLOR, "taylor_order": order}
            )
            error = _relative_l2(dtn_apply(h, psi, expansion_cfg), reference)
            errors.append(error)
            result.table.append(
                {"check": "backend", "sample": sample, "taylor_order": order, "value": error}
            )
        result.count("backend_agreement", int(errors[0] > BACKEND_TOLERANCE))
        if len(errors) > 1:
            result.count(
                "backend_refinement", int(errors[-1] > errors[0] and errors[-1] > RESIDUAL_FLOOR)
            )


def _temporal_convergence(cfg: ExperimentConfig, h0: Field, result: StudyResult) -> None:
    reference_stepper = cfg.stepper.model_copy(
        update={"scheme": SteppingScheme.RK4, "dt": cfg.study.reference_dt, "adaptive": False}
    )
    reference = run(h0, reference_stepper, cfg.dtn, stride=0)
    if reference.truncated:
        result.truncated, result.error = True, reference.error
        return
    errors: List[float] = []
    for level in range(3):
        dt = cfg.stepper.dt / 2**level
        stepper = cfg.stepper.model_copy(
            update={"scheme": SteppingScheme.SEMI_IMPLICIT, "dt": dt, "adaptive": False}
        )
        outcome = run(h0, stepper, cfg.dtn, stride=0)
        if outcome.truncated:
            result.truncated, result.error = True, outcome.error
            return
        error = (outcome.final_state.h - reference.final_state.h).l2_norm()
        order = math.log2(errors[-1] / error) if errors and error > 0.0 else None
        errors.append(error)
        result.table.append(
            {"check": "time", "scheme": "semi_implicit", "dt": dt, "value": error, "order": order}
        )
    result.count("scheme_agreement", int(errors[-1] > SCHEME_TOLERANCE))
    result.count("time_refinement", sum(1 for a, b in zip(errors, errors[1:]) if b > a))


def _linear_decay(cfg: ExperimentConfig, grid: TorusGrid, result: StudyResult) -> None:
    stepper = cfg.stepper.model_copy(update={"adaptive": False})
    epsilon = 1e-3
    for k in range(1, 5):
        h0 = Field.from_function(grid, lambda *x: epsilon * np.cos(k * x[0]))
        outcome = run(h0, stepper, cfg.dtn, stride=0)
        mode = (k,) + (0,) * (grid.dim - 1)
        rate = linear_decay_rate(h0, outcome.final_state.h, outcome.final_state.t, mode)
        relative = abs(rate - k) / k
        result.table.append(
            {"check": "decay", "mode": k, "value": rate, "relative_error": relative}
        )
        result.count("linear_decay", int(relative > DECAY_TOLERANCE))


def convergence_study(cfg: ExperimentConfig) -> StudyResult:
    """Backend agreement, temporal self-convergence and linear mode decay."""
    grid = cfg.build_grid()
    h0 = cfg.initial_surface(grid)
    state = SimState(t=0.0, h=h0)
    functionals = get_functionals(cfg.diagnostics.functionals)
    hooks = diagnostics.build_hooks(cfg.diagnostics.names, functionals)
    result = StudyResult(
        preset=Preset.CONVERGENCE.value,
        records=[snapshot_record(state, cfg.dtn, hooks)],
        final_state=state,
    )
    _backend_agreement(cfg, grid, result)
    _temporal_convergence(cfg, h0, result)
    if not result.truncated:
        _linear_decay(cfg, grid, result)
    return result


def _identity_row(
    result: StudyResult, check: str, value: float, tolerance: float, passed: bool
) -> None:
    result.table.append({"check": check, "value": value, "tolerance": tolerance, "passed": passed})
    result.count(check, int(not passed))


def identities_study(cfg: ExperimentConfig) -> StudyResult:
    """Evaluate the operator identities at the initial surface."""
    grid = cfg.build_grid()
    h = cfg.initial_surface(grid)
    dtn = cfg.dtn
    unit = RandomSpectrum(amplitude=1.0)
    psi = random_surface(grid, unit, cfg.seed + 1)
    chi = random_surface(grid, unit, cfg.seed + 2)
    zeta = random_surface(grid, RandomSpectrum(amplitude=0.1), cfg.seed + 3)
    state = SimState(t=0.0, h=h)
    result = StudyResult(
        preset=Preset.IDENTITIES.value,
        records=[snapshot_record(state, dtn, diagnostics.build_hooks(cfg.diagnostics.names, []))],
        final_state=state,
    )
    norm_psi, norm_chi = psi.l2_norm(), chi.l2_norm()

    g_one = dtn_apply(h, Field.constant(grid, 1.0), dtn).linf_norm()
    _identity_row(result, "g_of_constant", g_one, IDENTITY_TOLERANCE, g_one <= IDENTITY_TOLERANCE)

    g_psi = dtn_apply(h, psi, dtn)
    mean = abs(g_psi.mean() * grid.volume) / norm_psi
    _identity_row(result, "zero_mean", mean, IDENTITY_TOLERANCE, mean <= IDENTITY_TOLERANCE)

    energy = inner(psi, g_psi) / norm_psi**2
    _identity_row(result, "positivity", energy, -IDENTITY_TOLERANCE, energy >= -IDENTITY_TOLERANCE)

    g_chi = dtn_apply(h, chi, dtn)
    symmetry = abs(inner(psi, g_chi) - inner(chi, g_psi)) / (norm_psi * norm_chi)
    _identity_row(result, "symmetry", symmetry, IDENTITY_TOLERANCE, symmetry <= IDENTITY_TOLERANCE)

    b_psi, v_psi = traces(h, psi, dtn)
    adjoint_chi = adjoint_b(h, chi, dtn)
    adjointness = abs(inner(b_psi, chi) - inner(psi, adjoint_chi)) / (norm_psi * norm_chi)
    _identity_row(
        result, "adjoint_b", adjointness, IDENTITY_TOLERANCE, adjointness <= IDENTITY_TOLERANCE
    )

    g_b = dtn_apply(h, b_psi, dtn)
    div_v = divergence(v_psi)
    relative = (g_b + div_v).l2_norm() / max(g_b.l2_norm(), 1e-300)
    _identity_row(
        result,
        "g_b_equals_minus_div_v",
        relative,
        DIVERGENCE_IDENTITY_TOLERANCE,
        relative <= DIVERGENCE_IDENTITY_TOLERANCE,
    )

    b_h, v_h = traces(h, h, dtn)
    grad_h = gradient(h)
    g_h = dtn_apply(h, h, dtn)
    lhs = b_h * b_h + dot(v_h, v_h)
    rhs = (g_h * g_h + dot(grad_h, grad_h)) / (1.0 + dot(grad_h, grad_h))
    trace_gap = (lhs - rhs).linf_norm()
    _identity_row(
        result, "trace_energy", trace_gap, IDENTITY_TOLERANCE, trace_gap <= IDENTITY_TOLERANCE
    )

    exact = shape_derivative(h, psi, zeta, dtn)
    errors = []
    for epsilon in cfg.study.epsilons:
        quotient = (dtn_apply(h + epsilon * zeta, psi, dtn) - g_psi) * (1.0 / epsilon)
        error = (quotient - exact).l2_norm() / max(1.0, exact.l2_norm())
        errors.append(error)
        _identity_row(
            result,
            f"shape_derivative_eps_{epsilon:g}",
            error,
            5.0 * epsilon,
            error <= 5.0 * epsilon,
        )
    epsilons = cfg.study.epsilons
    if errors[-1] > 0.0:
        order = math.log(errors[0] / errors[-1]) / math.log(epsilons[0] / epsilons[-1])
    else:
        order = math.inf
    _identity_row(
        result, "shape_derivative_order", order, SHAPE_ORDER_MINIMUM, order >= SHAPE_ORDER_MINIMUM
    )
    return result


PRESET_RUNNERS: Dict[str, Callable[[ExperimentConfig], StudyResult]] = {
    Preset.LYAPUNOV.value: lyapunov_study,
    Preset.ELLIPTIC.value: elliptic_study,
    Preset.ENTROPY.value: entropy_study,
    Preset.CONVERGENCE.value: convergence_study,
    Preset.IDENTITIES.value: identities_study,
}


@log_function_call
def run_preset(cfg: ExperimentConfig) -> StudyResult:
    """
    Dispatch to the study named by ``cfg.preset``.

    Raises:
        ValueError: If the preset is unknown
    """
    name = Preset(cfg.preset).value
    try:
        runner = PRESET_RUNNERS[name]
    except KeyError:
        raise ValueError(f"Unknown preset '{name}'. Available: {sorted(PRESET_RUNNERS)}") from None
    return runner(cfg)
