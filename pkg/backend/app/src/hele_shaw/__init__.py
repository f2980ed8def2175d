"""
Hele-Shaw spectral simulator and identity checker.

Key Features:
- Periodic pseudo-spectral grids and fields on T^1 and T^2
- Dirichlet-to-Neumann operator with an elliptic reference backend and a
  fast expansion backend
- Semi-implicit and RK4 time stepping of d_t h + G(h)h = 0
- Diagnostics for Lyapunov monotonicity and convexity, the elliptic
  reformulation, Cordoba gaps and the entropy residual

Modules:
    grid: Torus grids, fields, multipliers, spectral calculus, dealiasing
    dtn: G(h), B(h), V(h), B(h)* and the shape derivative
    dynamics: Time stepping and runs with diagnostic hooks
    functionals: Convex functionals Phi
    records: Per-snapshot diagnostics records
    diagnostics: Identity and inequality residuals
"""

from .dtn import DtnBackend, DtnConfig, VerticalScheme, dtn_apply, harmonic_extension
from .dynamics import RunResult, SimState, StepperConfig, SteppingScheme, run, step
from .functionals import FUNCTIONALS, ConvexFunctional, get_functional
from .grid import Field, TorusGrid, build_grid
from .records import DiagnosticsRecord

__all__ = [
    "ConvexFunctional",
    "DiagnosticsRecord",
    "DtnBackend",
    "DtnConfig",
    "FUNCTIONALS",
    "Field",
    "RunResult",
    "SimState",
    "StepperConfig",
    "SteppingScheme",
    "TorusGrid",
    "VerticalScheme",
    "build_grid",
    "dtn_apply",
    "get_functional",
    "harmonic_extension",
    "run",
    "step",
]
