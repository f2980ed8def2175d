"""
Dirichlet-to-Neumann operator for the fluid domain {y < h(x)} below a periodic graph.

G(h)psi = d_y phi - grad h . grad_x phi at y = h(x), where phi is the harmonic
extension of psi. Two backends are provided:

- ``elliptic`` (reference): the Laplace problem is flattened by the change of
  variables y = h(x) - s, s in [0, H], and discretised spectrally in x and with
  a vertical scheme in s (mapped Chebyshev collocation by default, uniform
  second-order finite differences as an alternative). The variable-coefficient
  system is solved by GMRES, left-preconditioned with the exact flat-surface
  solver, which is block diagonal in the horizontal wavenumber.
- ``taylor`` (fast): the analytic expansion G(h) = sum_j G_j(h) around the flat
  surface, in its self-adjoint recursive form, so every order acts on psi:

      G_0 = |D|
      G_j = (1/j!) |D|^(j-1) D.eta^j D - sum_{l=1..j} |D|^l (eta^l / l!) G_{j-l}

  with D = -i grad and eta = h - mean(h).

The companions B(h), V(h), the adjoint B(h)* and the shape derivative are built
on top of ``dtn_apply`` and inherit the accuracy of the selected backend.
"""

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as PydanticField
from scipy.sparse.linalg import LinearOperator, gmres

from app.core.exceptions import (
    BackendValidityError,
    GridError,
    NonFiniteFieldError,
    SolverConvergenceError,
)
from app.core.logging import get_logger

from .grid import (
    Field,
    TorusGrid,
    VectorField,
    abs_derivative,
    check_finite,
    divergence,
    dot,
    gradient,
    krasny_filter,
    scale,
    spectral_amplitude,
)

logger = get_logger(__name__)


class DtnBackend(str, Enum):
    """Available Dirichlet-to-Neumann backends."""

    ELLIPTIC = "elliptic"
    TAYLOR = "taylor"


class VerticalScheme(str, Enum):
    """Discretisation of the flattened vertical coordinate s."""

    CHEBYSHEV = "chebyshev"
    FINITE_DIFFERENCE = "finite_difference"


class DtnConfig(BaseModel):
    """Immutable settings of the Dirichlet-to-Neumann evaluation."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    backend: DtnBackend = PydanticField(default=DtnBackend.TAYLOR, description="Backend")
    taylor_order: int = PydanticField(default=6, ge=1, le=12, description="Expansion order M")
    truncation_depth: float = PydanticField(default=15.0, ge=2.0, description="Slab depth H")
    vertical_points: int = PydanticField(default=64, ge=16, le=512, description="Levels Nz")
    vertical_scheme: VerticalScheme = PydanticField(default=VerticalScheme.CHEBYSHEV)
    vertical_scale: float = PydanticField(
        default=1.0, gt=0.0, description="Length of the algebraic map of the Chebyshev levels"
    )
    solver_tolerance: float = PydanticField(default=1e-11, gt=0.0, lt=1e-2)
    max_iterations: int = PydanticField(default=20, ge=1, description="GMRES restart cycles")
    restart: int = PydanticField(default=40, ge=5)
    krasny_threshold: float = PydanticField(default=1e-12, ge=0.0, lt=1e-6)
    taylor_amplitude_limit: float = PydanticField(default=0.3, gt=0.0)


# Vertical discretisation


@dataclass(frozen=True)
class VerticalDiscretization:
    """Levels s_0 = 0 < ... < s_{Nz-1} = H with first and second derivative matrices."""

    levels: np.ndarray
    first: np.ndarray
    second: np.ndarray


def _chebyshev_differentiation(nz: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Lobatto points on [-1, 1] in ascending order and their derivative matrix."""
    n = nz - 1
    x = np.cos(np.pi * np.arange(nz) / n)
    c = np.ones(nz)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(nz)
    dx = x[:, None] - x[None, :]
    d = np.outer(c, 1.0 / c) / (dx + np.eye(nz))
    d -= np.diag(d.sum(axis=1))
    # Reverse orientation: xi = -x runs from -1 (surface) to 1 (bottom).
    return -x, -d


def _mapped_chebyshev(nz: int, depth: float, length: float) -> VerticalDiscretization:
    # s(xi) = L (1 + xi) / (1 - xi + 2L/H) clusters levels near the surface.
    xi, d_xi = _chebyshev_differentiation(nz)
    c = 2.0 * length / depth
    levels = length * (1.0 + xi) / (1.0 - xi + c)
    levels[0], levels[-1] = 0.0, depth
    ds_dxi = length * (2.0 + c) / (1.0 - xi + c) ** 2
    first = d_xi / ds_dxi[:, None]
    return VerticalDiscretization(levels=levels, first=first, second=first @ first)


def _uniform_finite_difference(nz: int, depth: float) -> VerticalDiscretization:
    step = depth / (nz - 1)
    first = np.zeros((nz, nz))
    second = np.zeros((nz, nz))
    for i in range(1, nz - 1):
        first[i, i - 1 : i + 2] = [-0.5, 0.0, 0.5]
        second[i, i - 1 : i + 2] = [1.0, -2.0, 1.0]
    first[0, :3] = [-1.5, 2.0, -0.5]
    first[-1, -3:] = [0.5, -2.0, 1.5]
    second[0, :4] = [2.0, -5.0, 4.0, -1.0]
    second[-1, -4:] = [-1.0, 4.0, -5.0, 2.0]
    return VerticalDiscretization(
        levels=np.linspace(0.0, depth, nz), first=first / step, second=second / step**2
    )


@lru_cache(maxsize=32)
def vertical_discretization(
    scheme: VerticalScheme, nz: int, depth: float, length: float
) -> VerticalDiscretization:
    """Cached vertical levels and derivative matrices."""
    if scheme == VerticalScheme.CHEBYSHEV:
        return _mapped_chebyshev(nz, depth, length)
    return _uniform_finite_difference(nz, depth)


def _vertical(cfg: DtnConfig) -> VerticalDiscretization:
    return vertical_discretization(
        VerticalScheme(cfg.vertical_scheme),
        cfg.vertical_points,
        cfg.truncation_depth,
        cfg.vertical_scale,
    )


class FlatSurfaceSolver:
    """
    Exact solver of the flattened problem for a flat surface.

    For h = 0 the operator is block diagonal in the horizontal wavenumber:
    (d_ss - |k|^2) per mode, with a Dirichlet row at s = 0 and a Neumann row at
    s = H. The blocks only depend on |k|^2, so one inverse is kept per value.
    """

    def __init__(self, grid: TorusGrid, vertical: VerticalDiscretization) -> None:
        self.grid = grid
        self.vertical = vertical
        nz = vertical.levels.size
        values, index = np.unique(np.rint(grid.wavenumber_squared).astype(int), return_inverse=True)
        index = index.reshape(grid.shape)
        blocks: List[Tuple[np.ndarray, np.ndarray]] = []
        for position, k2 in enumerate(values):
            block = vertical.second - float(k2) * np.eye(nz)
            block[0] = 0.0
            block[0, 0] = 1.0
            block[-1] = vertical.first[-1]
            blocks.append((index == position, np.linalg.inv(block).T))
        self._blocks = blocks

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Apply the inverse flat operator to ``rhs`` of shape grid.shape + (Nz,)."""
        coefficients = np.fft.fftn(rhs, axes=self.grid.axes)
        out = np.empty_like(coefficients)
        for mask, inverse_t in self._blocks:
            out[mask] = coefficients[mask] @ inverse_t
        return np.fft.ifftn(out, axes=self.grid.axes).real


@lru_cache(maxsize=16)
def _flat_solver(
    grid: TorusGrid, scheme: VerticalScheme, nz: int, depth: float, length: float
) -> FlatSurfaceSolver:
    return FlatSurfaceSolver(grid, vertical_discretization(scheme, nz, depth, length))


class FlattenedLaplacian:
    """
    Laplacian in the coordinates (x, s) with y = h(x) - s.

    Interior rows:
        Delta_x P + (1 + |grad h|^2) P_ss + 2 grad h . grad_x P_s + (Delta h) P_s
    Row s = 0 carries the Dirichlet trace, row s = H the Neumann closure P_s = 0.
    """

    def __init__(self, h: Field, vertical: VerticalDiscretization) -> None:
        self.grid = h.grid
        self.vertical = vertical
        self.shape = self.grid.shape + (vertical.levels.size,)
        self._axes = self.grid.axes
        h_hat = h.spectral
        kmesh = self.grid.derivative_wavenumber_mesh
        self._grad_h = [np.fft.ifftn(1j * k * h_hat).real for k in kmesh]
        self._slope2 = sum(g**2 for g in self._grad_h)
        self._lap_h = np.fft.ifftn(-self.grid.wavenumber_squared * h_hat).real
        self._k2 = self.grid.wavenumber_squared[..., None]
        self._kmesh = [k[..., None] for k in kmesh]
        self.is_flat = bool(np.max(np.abs(self._grad_h)) == 0.0)

    def apply(self, phi: np.ndarray) -> np.ndarray:
        phi_s = phi @ self.vertical.first.T
        phi_ss = phi @ self.vertical.second.T
        lap_x = np.fft.ifftn(-self._k2 * np.fft.fftn(phi, axes=self._axes), axes=self._axes).real
        out = (1.0 + self._slope2)[..., None] * phi_ss + lap_x + self._lap_h[..., None] * phi_s
        phi_s_hat = np.fft.fftn(phi_s, axes=self._axes)
        for grad_h, k in zip(self._grad_h, self._kmesh):
            mixed = np.fft.ifftn(1j * k * phi_s_hat, axes=self._axes).real
            out += 2.0 * grad_h[..., None] * mixed
        out[..., 0] = phi[..., 0]
        out[..., -1] = phi_s[..., -1]
        return out


@dataclass(frozen=True)
class HarmonicExtension:
    """
    Discrete harmonic extension on the flattened slab.

    Attributes:
        grid: Horizontal grid
        surface: Surface elevation h
        dirichlet: Prescribed surface data psi
        levels: Vertical coordinates s (depth below the surface)
        potential: Values of phi, shape grid.shape + (Nz,)
        surface_derivative: Row of the s-derivative matrix at s = 0
        residual: Relative residual of the preconditioned system
        iterations: GMRES inner iterations
    """

    grid: TorusGrid
    surface: Field
    dirichlet: Field
    levels: np.ndarray
    potential: np.ndarray
    surface_derivative: np.ndarray
    residual: float
    iterations: int

    def surface_trace(self) -> Field:
        return Field(self.grid, self.potential[..., 0])

    def surface_s_derivative(self) -> Field:
        """d_s phi at s = 0."""
        return Field(self.grid, self.potential @ self.surface_derivative)

    def surface_vertical_derivative(self) -> Field:
        """d_y phi at the surface; d_y = -d_s."""
        return -self.surface_s_derivative()

    def surface_horizontal_gradient(self) -> VectorField:
        """grad_x phi at the surface: grad(trace) + d_s phi grad h."""
        phi_s = self.surface_s_derivative()
        return tuple(
            g + phi_s * gh for g, gh in zip(gradient(self.surface_trace()), gradient(self.surface))
        )

    def physical_depths(self) -> np.ndarray:
        """Vertical coordinate y = h(x) - s at every slab node."""
        return self.surface.values[..., None] - self.levels


def _check_pair(h: Field, psi: Field) -> None:
    if h.grid != psi.grid:
        raise GridError("h and psi live on different grids")
    check_finite(h, "h")
    check_finite(psi, "psi")


def harmonic_extension(h: Field, psi: Field, cfg: DtnConfig) -> HarmonicExtension:
    """
    Solve the flattened Laplace problem with surface data ``psi``.

    Args:
        h: Surface elevation
        psi: Dirichlet data at the surface
        cfg: Backend settings (vertical scheme, depth, levels, tolerance)

    Returns:
        The discrete extension with its residual

    Raises:
        NonFiniteFieldError: If h or psi is not finite
        SolverConvergenceError: If GMRES stops above the tolerance
    """
    _check_pair(h, psi)
    vertical = _vertical(cfg)
    grid = h.grid
    operator = FlattenedLaplacian(h, vertical)
    flat = _flat_solver(
        grid,
        VerticalScheme(cfg.vertical_scheme),
        cfg.vertical_points,
        cfg.truncation_depth,
        cfg.vertical_scale,
    )

    rhs = np.zeros(operator.shape)
    rhs[..., 0] = psi.values
    preconditioned_rhs = flat.solve(rhs)
    rhs_norm = float(np.linalg.norm(preconditioned_rhs))

    iterations = 0
    residual = 0.0
    potential = preconditioned_rhs
    if not operator.is_flat and rhs_norm > 0.0:

        def matvec(vector: np.ndarray) -> np.ndarray:
            return flat.solve(operator.apply(vector.reshape(operator.shape))).ravel()

        def count(_: float) -> None:
            nonlocal iterations
            iterations += 1

        size = preconditioned_rhs.size
        linear_operator = LinearOperator((size, size), matvec=matvec, dtype=float)
        solution, info = gmres(
            linear_operator,
            preconditioned_rhs.ravel(),
            x0=preconditioned_rhs.ravel(),
            rtol=cfg.solver_tolerance,
            atol=0.0,
            restart=cfg.restart,
            maxiter=cfg.max_iterations,
            callback=count,
            callback_type="pr_norm",
        )
        residual = float(
            np.linalg.norm(matvec(solution) - preconditioned_rhs.ravel()) / rhs_norm
        )
        if not np.all(np.isfinite(solution)):
            raise NonFiniteFieldError("harmonic extension produced non-finite values")
        if info != 0 and residual > 100.0 * cfg.solver_tolerance:
            raise SolverConvergenceError("elliptic solve did not converge", residual)
        potential = solution.reshape(operator.shape)

    logger.debug("dtn_elliptic_solved", iterations=iterations, residual=residual)
    return HarmonicExtension(
        grid=grid,
        surface=h,
        dirichlet=psi,
        levels=vertical.levels,
        potential=potential,
        surface_derivative=vertical.first[0].copy(),
        residual=residual,
        iterations=iterations,
    )


def slope_factor(h: Field) -> Field:
    """1 + |grad h|^2."""
    grad_h = gradient(h)
    return 1.0 + dot(grad_h, grad_h)


def _elliptic_dtn(h: Field, psi: Field, cfg: DtnConfig) -> Field:
    extension = harmonic_extension(h, psi, cfg)
    grad_h = gradient(h)
    phi_s = extension.surface_s_derivative()
    return -(1.0 + dot(grad_h, grad_h)) * phi_s - dot(grad_h, gradient(psi))


def _taylor_dtn(h: Field, psi: Field, cfg: DtnConfig) -> Field:
    eta = h - h.mean()
    amplitude = eta.linf_norm()
    if amplitude > cfg.taylor_amplitude_limit:
        raise BackendValidityError(
            f"taylor backend needs max|h - mean h| <= {cfg.taylor_amplitude_limit}, "
            f"got {amplitude:.4f}"
        )
    leading = abs_derivative(psi)
    reference = spectral_amplitude(psi)
    if amplitude == 0.0 or reference == 0.0:
        return leading

    grad_psi = gradient(psi)
    powers = [Field.constant(psi.grid, 1.0), eta]
    for _ in range(2, cfg.taylor_order + 1):
        powers.append(powers[-1] * eta)

    terms = [leading]
    for j in range(1, cfg.taylor_order + 1):
        term = abs_derivative(-divergence(scale(grad_psi, powers[j])), j - 1) * (
            1.0 / math.factorial(j)
        )
        for l in range(1, j + 1):
            term = term - abs_derivative(powers[l] * terms[j - l], l) * (1.0 / math.factorial(l))
        terms.append(krasny_filter(term, cfg.krasny_threshold, reference))

    total = terms[-1]
    for term in reversed(terms[:-1]):
        total = total + term
    return total


def dtn_apply(h: Field, psi: Field, cfg: DtnConfig) -> Field:
    """
    Evaluate G(h)psi.

    Args:
        h: Surface elevation
        psi: Surface data
        cfg: Backend settings

    Returns:
        G(h)psi on the grid of h

    Raises:
        NonFiniteFieldError: If inputs are not finite
        BackendValidityError: If h is outside the taylor backend's amplitude range
        SolverConvergenceError: If the elliptic solve fails
    """
    _check_pair(h, psi)
    if DtnBackend(cfg.backend) == DtnBackend.ELLIPTIC:
        return _elliptic_dtn(h, psi, cfg)
    return _taylor_dtn(h, psi, cfg)


def traces(h: Field, psi: Field, cfg: DtnConfig) -> Tuple[Field, VectorField]:
    """B(h)psi and V(h)psi from a single G(h)psi evaluation."""
    grad_h = gradient(h)
    grad_psi = gradient(psi)
    b = (dtn_apply(h, psi, cfg) + dot(grad_h, grad_psi)) / (1.0 + dot(grad_h, grad_h))
    v = tuple(gp - b * gh for gp, gh in zip(grad_psi, grad_h))
    return b, v


def trace_b(h: Field, psi: Field, cfg: DtnConfig) -> Field:
    """B(h)psi = (G(h)psi + grad h . grad psi) / (1 + |grad h|^2)."""
    return traces(h, psi, cfg)[0]


def trace_v(h: Field, psi: Field, cfg: DtnConfig) -> VectorField:
    """V(h)psi = grad psi - (B(h)psi) grad h."""
    return traces(h, psi, cfg)[1]


def adjoint_b(h: Field, chi: Field, cfg: DtnConfig) -> Field:
    """B(h)*chi = G(h)(chi / q) - div(chi grad h / q), q = 1 + |grad h|^2."""
    _check_pair(h, chi)
    grad_h = gradient(h)
    weighted = chi / (1.0 + dot(grad_h, grad_h))
    return dtn_apply(h, weighted, cfg) - divergence(scale(grad_h, weighted))


def shape_derivative(h: Field, psi: Field, zeta: Field, cfg: DtnConfig) -> Field:
    """
    Derivative of h -> G(h)psi in the direction zeta.

    dG(h)psi . zeta = -G(h)(B zeta) - div(V zeta) with B = B(h)psi, V = V(h)psi.
    """
    _check_pair(h, zeta)
    b, v = traces(h, psi, cfg)
    return -dtn_apply(h, b * zeta, cfg) - divergence(scale(v, zeta))
