"""Tests for the Dirichlet-to-Neumann operator and its companions."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from app.core.exceptions import (
    BackendValidityError,
    GridError,
    NonFiniteFieldError,
    SolverConvergenceError,
)
from app.src.hele_shaw.dtn import (
    DtnBackend,
    DtnConfig,
    VerticalScheme,
    adjoint_b,
    dtn_apply,
    harmonic_extension,
    shape_derivative,
    trace_b,
    trace_v,
    traces,
    vertical_discretization,
)
from app.src.hele_shaw.grid import (
    Field,
    abs_derivative,
    build_grid,
    divergence,
    dot,
    gradient,
    inner,
    integrate,
)
from app.tests.factories import band_limited_field, cosine

seeds = st.integers(min_value=0, max_value=2**31)


def relative_l2(approximation: Field, reference: Field) -> float:
    return (approximation - reference).l2_norm() / reference.l2_norm()


@pytest.fixture
def wavy_grid():
    return build_grid(1, 128)


@pytest.fixture
def wavy_surface(wavy_grid):
    return Field.from_function(wavy_grid, lambda x: 0.1 * np.cos(x) + 0.05 * np.sin(2 * x))


class TestDtnConfig:
    def test_defaults(self):
        cfg = DtnConfig()
        assert cfg.backend == DtnBackend.TAYLOR
        assert cfg.taylor_order == 6
        assert cfg.truncation_depth == 15.0
        assert cfg.vertical_points == 64
        assert cfg.vertical_scheme == VerticalScheme.CHEBYSHEV

    @pytest.mark.parametrize(
        "field, value",
        [
            ("taylor_order", 13),
            ("taylor_order", 0),
            ("truncation_depth", 1.0),
            ("vertical_points", 8),
        ],
    )
    def test_rejects_out_of_range(self, field, value):
        with pytest.raises(ValidationError):
            DtnConfig(**{field: value})

    def test_rejects_unknown_key(self):
        with pytest.raises(ValidationError):
            DtnConfig(viscosity=1.0)

    def test_frozen_and_hashable(self):
        cfg = DtnConfig()
        assert hash(cfg) == hash(DtnConfig())
        with pytest.raises(ValidationError):
            cfg.taylor_order = 4


class TestVerticalDiscretization:
    def test_chebyshev_levels_span_slab(self):
        vertical = vertical_discretization(VerticalScheme.CHEBYSHEV, 64, 15.0, 1.0)
        assert vertical.levels[0] == 0.0
        assert vertical.levels[-1] == 15.0
        assert np.all(np.diff(vertical.levels) > 0)

    def test_finite_difference_exact_on_linear_function(self):
        vertical = vertical_discretization(VerticalScheme.FINITE_DIFFERENCE, 32, 15.0, 1.0)
        np.testing.assert_allclose(vertical.first @ vertical.levels, 1.0, atol=1e-12)
        np.testing.assert_allclose(vertical.second @ vertical.levels, 0.0, atol=1e-12)

    def test_chebyshev_derivative_of_decaying_mode(self):
        vertical = vertical_discretization(VerticalScheme.CHEBYSHEV, 64, 15.0, 1.0)
        mode = np.exp(-vertical.levels)
        np.testing.assert_allclose(vertical.first @ mode, -mode, atol=1e-6)


class TestHarmonicExtension:
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_flat_surface_separated_solution(self, grid_1d, elliptic_cfg, k):
        psi = cosine(grid_1d, 1.0, k)
        extension = harmonic_extension(Field.zeros(grid_1d), psi, elliptic_cfg)
        exact = np.exp(-k * extension.levels)[None, :] * psi.values[:, None]
        error = np.linalg.norm(extension.potential - exact) / np.linalg.norm(exact)
        assert error <= 1e-4

    def test_surface_trace_matches_dirichlet_data(self, grid_1d, surface, elliptic_cfg):
        psi = band_limited_field(grid_1d, 11, max_mode=4)
        extension = harmonic_extension(surface, psi, elliptic_cfg)
        assert relative_l2(extension.surface_trace(), psi) <= 1e-8
        assert extension.residual <= 100 * elliptic_cfg.solver_tolerance

    def test_constant_surface_translation(self, grid_1d, elliptic_cfg):
        psi = band_limited_field(grid_1d, 12, max_mode=4)
        shifted = dtn_apply(Field.constant(grid_1d, 0.3), psi, elliptic_cfg)
        flat = dtn_apply(Field.zeros(grid_1d), psi, elliptic_cfg)
        assert (shifted - flat).linf_norm() <= 1e-10

    def test_physical_depths(self, grid_1d, surface, elliptic_cfg):
        extension = harmonic_extension(surface, cosine(grid_1d, 1.0), elliptic_cfg)
        depths = extension.physical_depths()
        np.testing.assert_allclose(depths[:, 0], surface.values)
        np.testing.assert_allclose(depths[:, -1], surface.values - 15.0)

    def test_traces_match_extension(self, grid_1d, surface, elliptic_cfg, taylor_cfg):
        extension = harmonic_extension(surface, surface, elliptic_cfg)
        b = trace_b(surface, surface, taylor_cfg)
        (v,) = trace_v(surface, surface, taylor_cfg)
        (grad_phi,) = extension.surface_horizontal_gradient()
        assert relative_l2(b, extension.surface_vertical_derivative()) <= 1e-4
        assert relative_l2(v, grad_phi) <= 1e-4

    def test_finite_difference_scheme_converges(self, grid_1d):
        psi = cosine(grid_1d, 1.0)
        errors = []
        for nz in (32, 64):
            cfg = DtnConfig(
                backend=DtnBackend.ELLIPTIC,
                vertical_scheme=VerticalScheme.FINITE_DIFFERENCE,
                vertical_points=nz,
            )
            errors.append(relative_l2(dtn_apply(Field.zeros(grid_1d), psi, cfg), psi))
        assert errors[1] < errors[0] / 3

    def test_non_convergence_reports_residual(self, grid_1d):
        cfg = DtnConfig(
            backend=DtnBackend.ELLIPTIC, max_iterations=1, restart=5, solver_tolerance=1e-12
        )
        h = Field.from_function(grid_1d, lambda x: 0.25 * np.cos(x) + 0.1 * np.cos(3 * x))
        with pytest.raises(SolverConvergenceError) as excinfo:
            harmonic_extension(h, cosine(grid_1d, 1.0, 2), cfg)
        assert excinfo.value.residual > cfg.solver_tolerance


class TestDtnApply:
    @pytest.mark.parametrize("k", range(1, 9))
    def test_flat_surface_is_abs_derivative(self, grid_1d, taylor_cfg, k):
        psi = cosine(grid_1d, 1.0, k)
        g = dtn_apply(Field.zeros(grid_1d), psi, taylor_cfg)
        assert (g - k * psi).linf_norm() <= 1e-10

    @pytest.mark.parametrize("k", [1, 2, 4])
    def test_flat_surface_elliptic(self, grid_1d, elliptic_cfg, k):
        psi = cosine(grid_1d, 1.0, k)
        g = dtn_apply(Field.zeros(grid_1d), psi, elliptic_cfg)
        assert (g - k * psi).linf_norm() <= 1e-4 * k

    @pytest.mark.parametrize("backend", list(DtnBackend))
    def test_constant_data(self, grid_1d, surface, backend):
        g = dtn_apply(surface, Field.constant(grid_1d, 1.0), DtnConfig(backend=backend))
        assert g.linf_norm() <= 1e-8

    def test_backends_agree_on_reference_pair(self, grid_1d, surface, elliptic_cfg, taylor_cfg):
        psi = Field.from_function(grid_1d, np.sin)
        reference = dtn_apply(surface, psi, elliptic_cfg)
        assert relative_l2(dtn_apply(surface, psi, taylor_cfg), reference) <= 1e-5

    @pytest.mark.parametrize("seed", [0, 1])
    def test_backends_agree_on_random_pairs(self, grid_1d, elliptic_cfg, seed):
        h = band_limited_field(grid_1d, 100 + seed, amplitude=0.05, max_mode=2)
        psi = band_limited_field(grid_1d, 200 + seed, max_mode=4)
        reference = dtn_apply(h, psi, elliptic_cfg)
        errors = {
            order: relative_l2(dtn_apply(h, psi, DtnConfig(taylor_order=order)), reference)
            for order in (2, 6)
        }
        assert errors[6] <= 1e-4
        assert errors[6] < errors[2]

    def test_zero_mean(self, wavy_surface):
        psi = band_limited_field(wavy_surface.grid, 21)
        g = dtn_apply(wavy_surface, psi, DtnConfig())
        assert abs(integrate(g)) <= 1e-8 * psi.l2_norm()

    @given(seed=seeds)
    @settings(max_examples=10, deadline=None)
    def test_positivity(self, seed):
        grid = build_grid(1, 128)
        h = band_limited_field(grid, seed, amplitude=0.1, max_mode=2)
        psi = band_limited_field(grid, seed + 1)
        assert inner(psi, dtn_apply(h, psi, DtnConfig())) >= -1e-8 * psi.l2_norm() ** 2

    @given(seed=seeds)
    @settings(max_examples=10, deadline=None)
    def test_symmetry(self, seed):
        grid = build_grid(1, 128)
        h = Field.from_function(grid, lambda x: 0.1 * np.cos(x) + 0.05 * np.sin(2 * x))
        psi = band_limited_field(grid, seed)
        chi = band_limited_field(grid, seed + 1)
        cfg = DtnConfig()
        gap = inner(psi, dtn_apply(h, chi, cfg)) - inner(chi, dtn_apply(h, psi, cfg))
        assert abs(gap) <= 1e-8 * psi.l2_norm() * chi.l2_norm()

    def test_amplitude_guard(self, grid_1d, taylor_cfg):
        h = cosine(grid_1d, 0.4)
        with pytest.raises(BackendValidityError):
            dtn_apply(h, cosine(grid_1d, 1.0), taylor_cfg)

    def test_mean_is_removed_before_expansion(self, grid_1d, surface, taylor_cfg):
        psi = cosine(grid_1d, 1.0, 2)
        lifted = dtn_apply(surface + 5.0, psi, taylor_cfg)
        assert (lifted - dtn_apply(surface, psi, taylor_cfg)).linf_norm() <= 1e-12

    def test_non_finite_input(self, grid_1d, taylor_cfg):
        values = np.zeros(grid_1d.shape)
        values[0] = np.inf
        with pytest.raises(NonFiniteFieldError):
            dtn_apply(Field(grid_1d, values), cosine(grid_1d, 1.0), taylor_cfg)

    def test_grid_mismatch(self, grid_1d, taylor_cfg):
        with pytest.raises(GridError):
            dtn_apply(Field.zeros(grid_1d), Field.zeros(build_grid(1, 32)), taylor_cfg)

    def test_two_dimensional_flat_surface(self, grid_2d, taylor_cfg):
        psi = Field.from_function(grid_2d, lambda x, y: np.cos(3 * x + 4 * y))
        g = dtn_apply(Field.zeros(grid_2d), psi, taylor_cfg)
        assert (g - 5.0 * psi).linf_norm() <= 1e-10


class TestTraces:
    def test_flat_surface(self, grid_1d, taylor_cfg):
        psi = band_limited_field(grid_1d, 31)
        b, (v,) = traces(Field.zeros(grid_1d), psi, taylor_cfg)
        assert (b - abs_derivative(psi)).linf_norm() <= 1e-10
        assert (v - gradient(psi)[0]).linf_norm() <= 1e-12

    def test_constant_data(self, grid_1d, surface, taylor_cfg):
        b, (v,) = traces(surface, Field.constant(grid_1d, 2.0), taylor_cfg)
        assert b.linf_norm() <= 1e-10
        assert v.linf_norm() <= 1e-10

    def test_divergence_identity(self, wavy_surface):
        cfg = DtnConfig()
        psi = band_limited_field(wavy_surface.grid, 41, max_mode=4)
        b, v = traces(wavy_surface, psi, cfg)
        g_b = dtn_apply(wavy_surface, b, cfg)
        assert (g_b + divergence(v)).l2_norm() <= 1e-4 * g_b.l2_norm()

    def test_trace_energy_identity(self, surface, taylor_cfg):
        b, v = traces(surface, surface, taylor_cfg)
        grad_h = gradient(surface)
        g_h = dtn_apply(surface, surface, taylor_cfg)
        expected = (g_h * g_h + dot(grad_h, grad_h)) / (1.0 + dot(grad_h, grad_h))
        assert (b * b + dot(v, v) - expected).linf_norm() <= 1e-8


class TestAdjointB:
    def test_flat_surface(self, grid_1d, taylor_cfg):
        chi = band_limited_field(grid_1d, 51)
        result = adjoint_b(Field.zeros(grid_1d), chi, taylor_cfg)
        assert (result - abs_derivative(chi)).linf_norm() <= 1e-10

    def test_zero(self, grid_1d, surface, taylor_cfg):
        assert adjoint_b(surface, Field.zeros(grid_1d), taylor_cfg).linf_norm() == 0.0

    @given(seed=seeds)
    @settings(max_examples=10, deadline=None)
    def test_adjointness(self, seed):
        grid = build_grid(1, 128)
        h = Field.from_function(grid, lambda x: 0.1 * np.cos(x) + 0.05 * np.sin(2 * x))
        psi = band_limited_field(grid, seed)
        chi = band_limited_field(grid, seed + 1)
        cfg = DtnConfig()
        gap = inner(trace_b(h, psi, cfg), chi) - inner(psi, adjoint_b(h, chi, cfg))
        assert abs(gap) <= 1e-7 * psi.l2_norm() * chi.l2_norm()


class TestShapeDerivative:
    def test_vertical_translation(self, grid_1d, taylor_cfg):
        psi = cosine(grid_1d, 1.0)
        zeta = Field.constant(grid_1d, 0.7)
        result = shape_derivative(Field.zeros(grid_1d), psi, zeta, taylor_cfg)
        assert result.linf_norm() <= 1e-8

    def test_zero_direction(self, grid_1d, surface, taylor_cfg):
        psi = cosine(grid_1d, 1.0, 2)
        result = shape_derivative(surface, psi, Field.zeros(grid_1d), taylor_cfg)
        assert result.linf_norm() <= 1e-14

    def test_finite_difference_oracle(self, grid_1d, surface, taylor_cfg):
        psi = Field.from_function(grid_1d, lambda x: np.sin(x) + 0.5 * np.cos(2 * x))
        zeta = cosine(grid_1d, 0.1, 3)
        exact = shape_derivative(surface, psi, zeta, taylor_cfg)
        base = dtn_apply(surface, psi, taylor_cfg)
        epsilons = (1e-3, 1e-4)
        errors = []
        for epsilon in epsilons:
            quotient = (dtn_apply(surface + epsilon * zeta, psi, taylor_cfg) - base) * (1 / epsilon)
            errors.append((quotient - exact).l2_norm() / max(1.0, exact.l2_norm()))
        for epsilon, error in zip(epsilons, errors):
            assert error <= 5 * epsilon
        order = np.log(errors[0] / errors[1]) / np.log(epsilons[0] / epsilons[1])
        assert order >= 0.9
