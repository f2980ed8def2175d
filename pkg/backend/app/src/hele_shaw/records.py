"""
Per-snapshot diagnostics record and its CSV row layout.

Column order is stable: ``t, h_mean, h_l2, h_linf``, then ``I_<name>`` for each
functional, ``dI_<name>`` and ``d2I_<name>`` (first and second differences of
the Lyapunov series, when a study filled them), ``D_<name>`` for each
dissipation functional, then the scalar diagnostics in ``SCALAR_COLUMNS``
order. Names keep registration order. Absent values are written as ``NA``.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

MISSING = "NA"

SCALAR_COLUMNS = (
    "min_a",
    "max_gamma",
    "elliptic_residual_l2",
    "l2_convexity_lhs",
    "l2_convexity_rhs",
    "cordoba_min_gap",
    "entropy_min_residual",
)


def format_value(value: Optional[float]) -> str:
    """Shortest round-trip representation; ``NA`` for absent values."""
    if value is None:
        return MISSING
    return repr(float(value))


@dataclass(frozen=True)
class ColumnLayout:
    """Functional names behind the per-functional column groups."""

    lyapunov: Tuple[str, ...] = ()
    differences: Tuple[str, ...] = ()
    dissipation: Tuple[str, ...] = ()

    def header(self) -> List[str]:
        return (
            ["t", "h_mean", "h_l2", "h_linf"]
            + [f"I_{name}" for name in self.lyapunov]
            + [f"{prefix}_{name}" for prefix in ("dI", "d2I") for name in self.differences]
            + [f"D_{name}" for name in self.dissipation]
            + list(SCALAR_COLUMNS)
        )


@dataclass
class DiagnosticsRecord:
    """
    Scalar diagnostics of one simulation snapshot.

    Attributes:
        t: Time
        h_mean: Mean of h
        h_l2: L2 norm of h
        h_linf: Max norm of h
        lyapunov: I_Phi per functional name
        first_difference: I_Phi(t_n) - I_Phi(t_{n-1}) per functional name
        second_difference: I_Phi(t_{n+1}) - 2 I_Phi(t_n) + I_Phi(t_{n-1}) per name
        dissipation: Integral of Phi'(h) G(h)h per functional name
        min_a: Minimum of the Rayleigh-Taylor coefficient
        max_gamma: Maximum of gamma
        elliptic_residual_l2: L2 norm of the elliptic residual
        l2_convexity_lhs: -d/dt of the integral of h G(h)h
        l2_convexity_rhs: Integral of a ((G(h)h)^2 + |grad h|^2)
        cordoba_min_gap: Smallest Cordoba gap over the suite
        entropy_min_residual: Smallest entropy residual over the m values
    """

    t: float
    h_mean: float
    h_l2: float
    h_linf: float
    lyapunov: Dict[str, float] = field(default_factory=dict)
    first_difference: Dict[str, float] = field(default_factory=dict)
    second_difference: Dict[str, float] = field(default_factory=dict)
    dissipation: Dict[str, float] = field(default_factory=dict)
    min_a: Optional[float] = None
    max_gamma: Optional[float] = None
    elliptic_residual_l2: Optional[float] = None
    l2_convexity_lhs: Optional[float] = None
    l2_convexity_rhs: Optional[float] = None
    cordoba_min_gap: Optional[float] = None
    entropy_min_residual: Optional[float] = None

    def update(self, values: Dict[str, Any]) -> None:
        """Merge hook output: dict entries extend the maps, scalars replace fields."""
        for key, value in values.items():
            if key in ("lyapunov", "dissipation"):
                getattr(self, key).update(value)
            elif key in SCALAR_COLUMNS:
                setattr(self, key, None if value is None else float(value))
            else:
                raise ValueError(f"Unknown diagnostics field '{key}'")

    def is_finite(self) -> bool:
        values: List[Optional[float]] = [self.t, self.h_mean, self.h_l2, self.h_linf]
        for mapping in (self.lyapunov, self.first_difference, self.second_difference):
            values += list(mapping.values())
        values += list(self.dissipation.values())
        values += [getattr(self, name) for name in SCALAR_COLUMNS]
        return all(v is None or math.isfinite(v) for v in values)

    def layout(self) -> ColumnLayout:
        differences = dict.fromkeys(self.first_difference)
        differences.update(dict.fromkeys(self.second_difference))
        return ColumnLayout(tuple(self.lyapunov), tuple(differences), tuple(self.dissipation))

    def header(self, layout: Optional[ColumnLayout] = None) -> List[str]:
        return (layout or self.layout()).header()

    def to_row(self, layout: Optional[ColumnLayout] = None) -> List[str]:
        """Render the record in ``header`` order."""
        layout = layout or self.layout()
        row = [format_value(v) for v in (self.t, self.h_mean, self.h_l2, self.h_linf)]
        row += [format_value(self.lyapunov.get(name)) for name in layout.lyapunov]
        row += [format_value(self.first_difference.get(name)) for name in layout.differences]
        row += [format_value(self.second_difference.get(name)) for name in layout.differences]
        row += [format_value(self.dissipation.get(name)) for name in layout.dissipation]
        row += [format_value(getattr(self, name)) for name in SCALAR_COLUMNS]
        return row


def column_layout(records: Sequence[DiagnosticsRecord]) -> ColumnLayout:
    """Column groups over a series, names in first-seen order."""
    lyapunov: Dict[str, None] = {}
    differences: Dict[str, None] = {}
    dissipation: Dict[str, None] = {}
    for record in records:
        lyapunov.update(dict.fromkeys(record.lyapunov))
        differences.update(dict.fromkeys(record.first_difference))
        differences.update(dict.fromkeys(record.second_difference))
        dissipation.update(dict.fromkeys(record.dissipation))
    return ColumnLayout(tuple(lyapunov), tuple(differences), tuple(dissipation))
