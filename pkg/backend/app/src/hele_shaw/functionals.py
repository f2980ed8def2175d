"""
Convex functionals Phi used by the Lyapunov and Cordoba diagnostics.

Each functional bundles Phi, Phi' and Phi'' as vectorised numpy callables with
flags for the convexity classes the diagnostics distinguish:

- ``phi_convex``: Phi'' >= 0 everywhere (Lyapunov monotonicity, Cordoba gap)
- ``dphi_convex``: Phi' also convex (strong Lyapunov, time convexity)
- ``nonneg``: Phi >= 0 (recorded, not required)

Key Features:
- Registered suite: square, quartic, exp, cosh, negative_square, affine
- ``negative_square`` is the C^2 mollification of x^2 1_{x<0}, width 1e-3
- ``validate()`` checks the flags on a sample of [-5, 5]
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence

import numpy as np

from app.core.exceptions import DiagnosticError

ArrayMap = Callable[[np.ndarray], np.ndarray]

SAMPLE_RANGE = (-5.0, 5.0)
SAMPLE_POINTS = 1000
THIRD_DIFFERENCE_TOLERANCE = 1e-10
MOLLIFICATION_WIDTH = 1e-3


@dataclass(frozen=True)
class ConvexFunctional:
    """
    Phi together with its first two derivatives.

    Attributes:
        name: Registry key, also used for CSV columns (``I_<name>``)
        phi: Phi
        dphi: Phi'
        d2phi: Phi''
        phi_convex: Phi'' >= 0 on R
        dphi_convex: Phi' convex on R
        nonneg: Phi >= 0 on R
        exploratory: Results carry no acceptance force

    Example:
        >>> square = get_functional("square")
        >>> float(square.phi(np.array(3.0)))
        9.0
    """

    name: str
    phi: ArrayMap
    dphi: ArrayMap
    d2phi: ArrayMap
    phi_convex: bool = True
    dphi_convex: bool = False
    nonneg: bool = False
    exploratory: bool = False

    def validate(self) -> "ConvexFunctional":
        """
        Check the declared convexity flags on a uniform sample of [-5, 5].

        Raises:
            DiagnosticError: If a declared flag is contradicted by the sample
        """
        x = np.linspace(*SAMPLE_RANGE, SAMPLE_POINTS)
        if self.phi_convex and np.any(self.d2phi(x) < 0.0):
            raise DiagnosticError(f"functional '{self.name}' has Phi'' < 0 on the sample")
        if self.dphi_convex:
            if np.any(np.diff(self.phi(x), n=3) < -THIRD_DIFFERENCE_TOLERANCE):
                raise DiagnosticError(f"functional '{self.name}' has a non-convex derivative")
        if self.nonneg and np.any(self.phi(x) < 0.0):
            raise DiagnosticError(f"functional '{self.name}' takes negative values")
        return self


def _negative_square(delta: float) -> ConvexFunctional:
    # Cubic blend on (-delta, 0) joins 0 to the shifted parabola with C^2 contact.
    def phi(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        blend = -(x**3) / (3.0 * delta)
        outer = x**2 + delta * x + delta**2 / 3.0
        return np.where(x >= 0.0, 0.0, np.where(x > -delta, blend, outer))

    def dphi(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0.0, 0.0, np.where(x > -delta, -(x**2) / delta, 2.0 * x + delta))

    def d2phi(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0.0, 0.0, np.where(x > -delta, -2.0 * x / delta, 2.0))

    return ConvexFunctional(
        name="negative_square",
        phi=phi,
        dphi=dphi,
        d2phi=d2phi,
        phi_convex=True,
        dphi_convex=False,
        nonneg=True,
    )


FUNCTIONALS: Dict[str, ConvexFunctional] = {
    "square": ConvexFunctional(
        name="square",
        phi=lambda x: np.asarray(x, dtype=float) ** 2,
        dphi=lambda x: 2.0 * np.asarray(x, dtype=float),
        d2phi=lambda x: np.full_like(np.asarray(x, dtype=float), 2.0),
        dphi_convex=True,
        nonneg=True,
    ),
    # 4x^3 is convex only on x >= 0
    "quartic": ConvexFunctional(
        name="quartic",
        phi=lambda x: np.asarray(x, dtype=float) ** 4,
        dphi=lambda x: 4.0 * np.asarray(x, dtype=float) ** 3,
        d2phi=lambda x: 12.0 * np.asarray(x, dtype=float) ** 2,
        nonneg=True,
        exploratory=True,
    ),
    "exp": ConvexFunctional(
        name="exp",
        phi=np.exp,
        dphi=np.exp,
        d2phi=np.exp,
        dphi_convex=True,
        nonneg=True,
    ),
    # sinh is convex only on x >= 0
    "cosh": ConvexFunctional(
        name="cosh",
        phi=np.cosh,
        dphi=np.sinh,
        d2phi=np.cosh,
        nonneg=True,
    ),
    "negative_square": _negative_square(MOLLIFICATION_WIDTH),
    "affine": ConvexFunctional(
        name="affine",
        phi=lambda x: np.asarray(x, dtype=float),
        dphi=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        d2phi=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        dphi_convex=True,
    ),
}

CORDOBA_SUITE = ("square", "quartic", "cosh", "negative_square")
LYAPUNOV_SUITE = ("square", "exp", "cosh")


def get_functional(name: str) -> ConvexFunctional:
    """
    Look up a registered functional.

    Raises:
        ValueError: If no functional carries that name
    """
    try:
        return FUNCTIONALS[name]
    except KeyError:
        raise ValueError(
            f"Unknown functional '{name}'. Available: {sorted(FUNCTIONALS)}"
        ) from None


def get_functionals(names: Sequence[str]) -> List[ConvexFunctional]:
    return [get_functional(name) for name in names]
