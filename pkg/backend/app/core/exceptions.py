"""
Exception hierarchy for the Hele-Shaw verification harness.

Every error derives from ``HeleShawError`` and from the builtin that callers
would expect for the situation (``ValueError`` for rejected input,
``RuntimeError`` for a computation that failed), so generic handlers keep
working.
"""

from typing import Any, List, Optional


class HeleShawError(Exception):
    """Root of all harness errors."""


class GridError(HeleShawError, ValueError):
    """Invalid grid parameters or mismatched grids."""


class NonFiniteFieldError(HeleShawError, ValueError):
    """A field holds NaN or infinite values."""


class BackendValidityError(HeleShawError, ValueError):
    """Input outside the validated regime of a Dirichlet-to-Neumann backend."""


class SolverConvergenceError(HeleShawError, RuntimeError):
    """The elliptic solve did not reach its tolerance.

    Attributes:
        residual: Relative residual at the last iterate
    """

    def __init__(self, message: str, residual: float) -> None:
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class SolverBlowUpError(HeleShawError, RuntimeError):
    """Time integration produced NaN or left the validated amplitude range.

    Attributes:
        last_state: Last state that passed the checks
    """

    def __init__(self, message: str, last_state: Any) -> None:
        super().__init__(message)
        self.last_state = last_state


class TimeStepUnderflowError(HeleShawError, RuntimeError):
    """Adaptive stepping shrank the step below its floor."""


class DiagnosticError(HeleShawError, ValueError):
    """A diagnostic precondition failed (a <= 0, overflow, short series)."""


class ConfigurationError(HeleShawError, ValueError):
    """Experiment configuration rejected.

    Attributes:
        errors: Every violation found, one human-readable line each
    """

    def __init__(self, errors: List[str], source: Optional[str] = None) -> None:
        prefix = f"Invalid configuration ({source})" if source else "Invalid configuration"
        super().__init__(prefix + ":\n  " + "\n  ".join(errors))
        self.errors = errors
