"""
Identity and inequality diagnostics evaluated on simulation states.

Every quantity here is a pure function of one ``SimState`` (plus the backend
settings), so snapshots can be processed concurrently. Time derivatives are
evaluated exactly in space through the shape derivative; time differences
only appear in ``lyapunov_differences``, which works on recorded series.

Key Features:
- Rayleigh-Taylor coefficient a = 1 - B with the traces B, V of the flow
- gamma, the forcing of the B equation (non-positive)
- Lyapunov functionals, dissipation, and the L2 time-convexity identity
- Elliptic residual d_t^2 h + Delta h + B(h)*(|grad_{t,x} h|^2)
- Cordoba pointwise gap and the entropy residual of u = log(ma)/sqrt(a)
- Hook factories feeding ``DiagnosticsRecord`` during ``run``
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import DiagnosticError

from .dtn import DtnConfig, adjoint_b, dtn_apply
from .dynamics import Hook, SimState, second_time_derivative
from .functionals import CORDOBA_SUITE, ConvexFunctional, get_functionals
from .grid import (
    Field,
    VectorField,
    divergence,
    dot,
    gradient,
    inner,
    integrate,
    laplacian,
    scale,
)
from .records import DiagnosticsRecord

FIRST_DIFFERENCE_TOLERANCE = 1e-8
SECOND_DIFFERENCE_TOLERANCE = 1e-6
MIN_A_TOLERANCE = 1e-6
UNIFORM_STRIDE_TOLERANCE = 1e-6

HOOK_NAMES = (
    "lyapunov",
    "dissipation",
    "min_a",
    "gamma",
    "elliptic_residual",
    "l2_identity",
    "cordoba",
    "entropy",
)


@dataclass(frozen=True)
class SurfaceFields:
    """Quantities shared by the diagnostics of one state, from one G(h)h evaluation."""

    h: Field
    grad_h: VectorField
    slope: Field
    g_h: Field
    b: Field
    v: VectorField
    a: Field


def surface_fields(state: SimState, cfg: DtnConfig) -> SurfaceFields:
    h = state.h
    grad_h = gradient(h)
    slope = 1.0 + dot(grad_h, grad_h)
    g_h = dtn_apply(h, h, cfg)
    b = (g_h + dot(grad_h, grad_h)) / slope
    return SurfaceFields(
        h=h, grad_h=grad_h, slope=slope, g_h=g_h, b=b, v=scale(grad_h, 1.0 - b), a=1.0 - b
    )


def taylor_fields(state: SimState, cfg: DtnConfig) -> Tuple[Field, VectorField, Field]:
    """
    Traces of the flow and the Rayleigh-Taylor coefficient.

    B = (G(h)h + |grad h|^2) / (1 + |grad h|^2), V = (1 - B) grad h, a = 1 - B.

    Returns:
        (B, V, a)
    """
    fields = surface_fields(state, cfg)
    return fields.b, fields.v, fields.a


def _gamma(fields: SurfaceFields, cfg: DtnConfig) -> Field:
    h, b, v = fields.h, fields.b, fields.v
    total = dtn_apply(h, b * b + dot(v, v), cfg) - 2.0 * b * dtn_apply(h, b, cfg)
    for component in v:
        total = total - 2.0 * component * dtn_apply(h, component, cfg)
    return total / fields.slope


def gamma(state: SimState, cfg: DtnConfig) -> Field:
    """(G(B^2 + |V|^2) - 2B G(B) - 2 V . G(V)) / (1 + |grad h|^2), G = G(h) acting per component."""
    return _gamma(surface_fields(state, cfg), cfg)


def lyapunov_value(state: SimState, functional: ConvexFunctional) -> float:
    """
    Integral of Phi(h) over the torus.

    Raises:
        DiagnosticError: If Phi(h) overflows
    """
    try:
        with np.errstate(over="raise", invalid="raise"):
            values = functional.phi(state.h.values)
    except FloatingPointError as exc:
        raise DiagnosticError(f"I_{functional.name} overflowed: {exc}") from exc
    if not np.all(np.isfinite(values)):
        raise DiagnosticError(f"I_{functional.name} is not finite")
    return integrate(Field(state.h.grid, values))


@dataclass(frozen=True)
class LyapunovDifferences:
    """
    Discrete differences of a Lyapunov series.

    Attributes:
        first: Forward differences I_{n+1} - I_n
        second: Central second differences I_{n+1} - 2 I_n + I_{n-1}
        monotonicity_violations: Indices of first differences above tolerance
        convexity_violations: Indices of second differences below -tolerance
    """

    first: np.ndarray
    second: np.ndarray
    monotonicity_violations: Tuple[int, ...]
    convexity_violations: Tuple[int, ...]

    @property
    def violation_count(self) -> int:
        return len(self.monotonicity_violations) + len(self.convexity_violations)


def lyapunov_differences(
    series: Sequence[Tuple[float, float]],
    first_tolerance: float = FIRST_DIFFERENCE_TOLERANCE,
    second_tolerance: float = SECOND_DIFFERENCE_TOLERANCE,
) -> LyapunovDifferences:
    """
    First and second differences of (t, I) samples with violation flags.

    Args:
        series: Samples at uniform time stride
        first_tolerance: Allowed increase per sample
        second_tolerance: Allowed negative curvature per sample

    Raises:
        DiagnosticError: If fewer than 3 samples or the stride is not uniform
    """
    if len(series) < 3:
        raise DiagnosticError(f"need at least 3 samples, got {len(series)}")
    times = np.array([t for t, _ in series], dtype=float)
    values = np.array([value for _, value in series], dtype=float)
    strides = np.diff(times)
    if np.any(strides <= 0.0) or np.ptp(strides) > UNIFORM_STRIDE_TOLERANCE * strides.mean():
        raise DiagnosticError("Lyapunov series must have a uniform time stride")
    first = np.diff(values)
    second = values[2:] - 2.0 * values[1:-1] + values[:-2]
    return LyapunovDifferences(
        first=first,
        second=second,
        monotonicity_violations=tuple(int(i) for i in np.flatnonzero(first > first_tolerance)),
        convexity_violations=tuple(int(i) for i in np.flatnonzero(second < -second_tolerance)),
    )


def _dissipation(h: Field, g_h: Field, functional: ConvexFunctional) -> float:
    return inner(Field(h.grid, functional.dphi(h.values)), g_h)


def dissipation_value(state: SimState, functional: ConvexFunctional, cfg: DtnConfig) -> float:
    """Integral of Phi'(h) G(h)h, non-negative for convex Phi."""
    return _dissipation(state.h, dtn_apply(state.h, state.h, cfg), functional)


def l2_convexity_identity(state: SimState, cfg: DtnConfig) -> Tuple[float, float]:
    """
    Both sides of -d/dt (h, G(h)h) = integral of a ((G(h)h)^2 + |grad h|^2).

    The left side is d^2/dt^2 of half the squared L2 norm,
    (d_t h, d_t h) + (h, d_t^2 h), with d_t^2 h from the shape derivative.
    """
    fields = surface_fields(state, cfg)
    lhs = inner(fields.g_h, fields.g_h) + inner(fields.h, second_time_derivative(state, cfg))
    return lhs, integrate(fields.a * _space_time_energy(fields))


def _space_time_energy(fields: SurfaceFields) -> Field:
    """|grad_{t,x} h|^2 = (G(h)h)^2 + |grad h|^2."""
    return fields.g_h * fields.g_h + dot(fields.grad_h, fields.grad_h)


def elliptic_residual(state: SimState, cfg: DtnConfig) -> Field:
    """d_t^2 h + Delta h + B(h)*(|grad_{t,x} h|^2), zero along the flow."""
    fields = surface_fields(state, cfg)
    forcing = adjoint_b(state.h, _space_time_energy(fields), cfg)
    return second_time_derivative(state, cfg) + laplacian(state.h) + forcing


def elliptic_forcing_forms(state: SimState, cfg: DtnConfig) -> Tuple[Field, Field]:
    """
    The elliptic forcing evaluated two ways.

    Returns:
        (B(h)*(|grad_{t,x} h|^2), G(h)S - div(S grad h)) with S = B^2 + |V|^2
    """
    fields = surface_fields(state, cfg)
    adjoint_form = adjoint_b(state.h, _space_time_energy(fields), cfg)
    s = fields.b * fields.b + dot(fields.v, fields.v)
    trace_form = dtn_apply(state.h, s, cfg) - divergence(scale(fields.grad_h, s))
    return adjoint_form, trace_form


def cordoba_gap(h: Field, f: Field, functional: ConvexFunctional, cfg: DtnConfig) -> Field:
    """Phi'(f) G(h)f - G(h)Phi(f); non-negative for convex Phi."""
    grid = f.grid
    g_f = dtn_apply(h, f, cfg)
    transported = Field(grid, functional.dphi(f.values) * g_f.values)
    return transported - dtn_apply(h, Field(grid, functional.phi(f.values)), cfg)


def _require_positive_a(a: Field) -> None:
    lowest = a.min()
    if not lowest > 0.0:
        raise DiagnosticError(f"Rayleigh-Taylor coefficient not positive (min a = {lowest:.3e})")


def _operator_l(fields: SurfaceFields, f: Field, cfg: DtnConfig) -> Field:
    _require_positive_a(fields.a)
    root_a = fields.a.apply(np.sqrt, dealiased=False)
    transport = dot(fields.v, gradient(f)) + 0.5 * divergence(fields.v) * f
    return root_a * dtn_apply(fields.h, root_a * f, cfg) - transport


def operator_l(state: SimState, f: Field, cfg: DtnConfig) -> Field:
    """
    L(h)f = -V . grad f - (div V) f / 2 + sqrt(a) G(h)(sqrt(a) f).

    Raises:
        DiagnosticError: If a <= 0 at some node
    """
    return _operator_l(surface_fields(state, cfg), f, cfg)


def entropy_profile(a: Field, m: float = 1.0) -> Field:
    """u = log(m a) / sqrt(a)."""
    if not m > 0.0:
        raise DiagnosticError(f"entropy constant m must be positive, got {m}")
    _require_positive_a(a)
    return Field(a.grid, np.log(m * a.values) / np.sqrt(a.values))


def entropy_profile_v(a: Field) -> Field:
    """v = -log(a) / (2 sqrt(a)); u = -2v at m = 1."""
    _require_positive_a(a)
    return Field(a.grid, -np.log(a.values) / (2.0 * np.sqrt(a.values)))


def _time_derivative_a(fields: SurfaceFields, gamma_field: Field, cfg: DtnConfig) -> Field:
    a = fields.a
    return dot(fields.v, gradient(a)) - a * dtn_apply(fields.h, a, cfg) - gamma_field


def time_derivative_a(state: SimState, cfg: DtnConfig) -> Field:
    """d_t a = V . grad a - a G(h)a - gamma."""
    fields = surface_fields(state, cfg)
    return _time_derivative_a(fields, _gamma(fields, cfg), cfg)


@dataclass(frozen=True)
class EntropyResidual:
    """
    Entropy residual of u = log(ma)/sqrt(a).

    Attributes:
        residual: d_t u + L(h)u - gamma u / (2a), expected non-negative
        coefficient: c = -gamma / (2a), non-negative
        forcing: -gamma / (a sqrt(a)), non-negative
        profile: u
    """

    residual: Field
    coefficient: Field
    forcing: Field
    profile: Field

    def min_residual(self) -> float:
        return self.residual.min()


def entropy_residual(state: SimState, m: float, cfg: DtnConfig) -> EntropyResidual:
    """
    Evaluate the entropy inequality for u = log(ma)/sqrt(a).

    d_t u follows from d_t a by the chain rule,
    du/da = 1/(a sqrt(a)) - log(ma)/(2 a sqrt(a)).

    Raises:
        DiagnosticError: If a <= 0 somewhere or m <= 0
    """
    fields = surface_fields(state, cfg)
    a = fields.a
    u = entropy_profile(a, m)
    gamma_field = _gamma(fields, cfg)
    a_values = a.values
    a_root = np.sqrt(a_values)
    du_da = 1.0 / (a_values * a_root) - np.log(m * a_values) / (2.0 * a_values * a_root)
    u_t = Field(a.grid, du_da * _time_derivative_a(fields, gamma_field, cfg).values)
    coefficient = Field(a.grid, -gamma_field.values / (2.0 * a_values))
    residual = u_t + _operator_l(fields, u, cfg) + Field(a.grid, coefficient.values * u.values)
    return EntropyResidual(
        residual=residual,
        coefficient=coefficient,
        forcing=Field(a.grid, -gamma_field.values / (a_values * a_root)),
        profile=u,
    )


@dataclass(frozen=True)
class MinAViolation:
    """A record whose min a dropped below the initial value."""

    index: int
    t: float
    min_a: float
    baseline: float


def min_a_series(
    records: Sequence[DiagnosticsRecord], tolerance: float = MIN_A_TOLERANCE
) -> List[MinAViolation]:
    """
    Flag records with min_a(t) < min_a(0) - tolerance.

    Records without a min_a value are skipped.

    Raises:
        DiagnosticError: If the series is empty or the first record has no min_a
    """
    if not records:
        raise DiagnosticError("min a series is empty")
    baseline = records[0].min_a
    if baseline is None:
        raise DiagnosticError("first record carries no min_a")
    return [
        MinAViolation(index=i, t=record.t, min_a=record.min_a, baseline=baseline)
        for i, record in enumerate(records)
        if record.min_a is not None and record.min_a < baseline - tolerance
    ]


# Hooks


def lyapunov_hook(functionals: Sequence[ConvexFunctional]) -> Hook:
    def hook(state: SimState, cfg: DtnConfig) -> Dict[str, Dict[str, float]]:
        return {"lyapunov": {f.name: lyapunov_value(state, f) for f in functionals}}

    return hook


def dissipation_hook(functionals: Sequence[ConvexFunctional]) -> Hook:
    def hook(state: SimState, cfg: DtnConfig) -> Dict[str, Dict[str, float]]:
        g_h = dtn_apply(state.h, state.h, cfg)
        return {"dissipation": {f.name: _dissipation(state.h, g_h, f) for f in functionals}}

    return hook


def min_a_hook() -> Hook:
    def hook(state: SimState, cfg: DtnConfig) -> Dict[str, float]:
        return {"min_a": surface_fields(state, cfg).a.min()}

    return hook


def gamma_hook() -> Hook:
    def hook(state: SimState, cfg: DtnConfig) -> Dict[str, float]:
        return {"max_gamma": gamma(state, cfg).max()}

    return hook


def elliptic_residual_hook() -> Hook:
    def hook(state: SimState, cfg: DtnConfig) -> Dict[str, float]:
        return {"elliptic_residual_l2": elliptic_residual(state, cfg).l2_norm()}

    return hook


def l2_identity_hook() -> Hook:
    def hook(state: SimState, cfg: DtnConfig) -> Dict[str, float]:
        lhs, rhs = l2_convexity_identity(state, cfg)
        return {"l2_convexity_lhs": lhs, "l2_convexity_rhs": rhs}

    return hook


def cordoba_hook(functionals: Sequence[ConvexFunctional]) -> Hook:
    def hook(state: SimState, cfg: DtnConfig) -> Dict[str, float]:
        gaps = [cordoba_gap(state.h, state.h, f, cfg).min() for f in functionals]
        return {"cordoba_min_gap": min(gaps)}

    return hook


def entropy_hook(constants: Sequence[float]) -> Hook:
    def hook(state: SimState, cfg: DtnConfig) -> Dict[str, float]:
        residuals = [entropy_residual(state, m, cfg).min_residual() for m in constants]
        return {"entropy_min_residual": min(residuals)}

    return hook


def build_hooks(
    names: Sequence[str],
    functionals: Sequence[ConvexFunctional],
    cordoba_functionals: Optional[Sequence[ConvexFunctional]] = None,
    entropy_constants: Sequence[float] = (1.0, 10.0),
) -> List[Hook]:
    """
    Instantiate hooks by name, in ``HOOK_NAMES`` order.

    Raises:
        ValueError: If a name is not a registered hook
    """
    unknown = sorted(set(names) - set(HOOK_NAMES))
    if unknown:
        raise ValueError(f"Unknown diagnostics {unknown}. Available: {list(HOOK_NAMES)}")
    if cordoba_functionals is None:
        cordoba_functionals = get_functionals(CORDOBA_SUITE)
    factories = {
        "lyapunov": lambda: lyapunov_hook(functionals),
        "dissipation": lambda: dissipation_hook(functionals),
        "min_a": min_a_hook,
        "gamma": gamma_hook,
        "elliptic_residual": elliptic_residual_hook,
        "l2_identity": l2_identity_hook,
        "cordoba": lambda: cordoba_hook(cordoba_functionals),
        "entropy": lambda: entropy_hook(entropy_constants),
    }
    return [factories[name]() for name in HOOK_NAMES if name in names]
