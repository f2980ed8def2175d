"""Tests for the identity and inequality diagnostics."""

import math

import numpy as np
import pytest

from app.core.exceptions import DiagnosticError
from app.src.hele_shaw.diagnostics import (
    HOOK_NAMES,
    build_hooks,
    cordoba_gap,
    dissipation_value,
    elliptic_forcing_forms,
    elliptic_residual,
    entropy_profile,
    entropy_profile_v,
    entropy_residual,
    gamma,
    l2_convexity_identity,
    lyapunov_differences,
    lyapunov_value,
    min_a_series,
    operator_l,
    taylor_fields,
    time_derivative_a,
)
from app.src.hele_shaw.dtn import dtn_apply, trace_b
from app.src.hele_shaw.dynamics import SimState, StepperConfig, SteppingScheme, rk4_step
from app.src.hele_shaw.functionals import CORDOBA_SUITE, get_functional
from app.src.hele_shaw.grid import Field, abs_derivative, dot, gradient, inner, laplacian
from app.src.hele_shaw.records import DiagnosticsRecord
from app.tests.factories import band_limited_field, cosine


def central_difference(state, quantity, cfg, dt=1e-3):
    """d/dt quantity(state) along the flow by a central difference."""
    sc = StepperConfig(scheme=SteppingScheme.RK4, dt=dt, t_end=2.0)
    forward = rk4_step(state, dt, sc, cfg)
    backward = rk4_step(state, -dt, sc, cfg)
    return (quantity(forward) - quantity(backward)) * (0.5 / dt)


def record(t, min_a=None):
    return DiagnosticsRecord(t=t, h_mean=0.0, h_l2=0.0, h_linf=0.0, min_a=min_a)


class TestTaylorFields:
    def test_flat_surface(self, flat_state, taylor_cfg):
        b, (v,), a = taylor_fields(flat_state, taylor_cfg)
        assert b.linf_norm() == 0.0
        assert v.linf_norm() == 0.0
        assert a.values == pytest.approx(np.ones(a.grid.shape))

    def test_constant_surface(self, grid_1d, taylor_cfg):
        b, (v,), a = taylor_fields(SimState(t=0.0, h=Field.constant(grid_1d, 0.2)), taylor_cfg)
        assert b.linf_norm() <= 1e-14
        assert v.linf_norm() <= 1e-14
        assert (a - 1.0).linf_norm() <= 1e-14

    def test_matches_trace_b(self, state, taylor_cfg):
        b, _, a = taylor_fields(state, taylor_cfg)
        assert a.min() > 0.0
        assert (b - trace_b(state.h, state.h, taylor_cfg)).linf_norm() <= 1e-8


class TestGamma:
    def test_flat_surface(self, flat_state, taylor_cfg):
        assert gamma(flat_state, taylor_cfg).linf_norm() == 0.0

    def test_sign(self, small_surface, taylor_cfg):
        assert gamma(SimState(t=0.0, h=small_surface), taylor_cfg).max() <= 1e-7

    def test_time_consistency(self, surface, taylor_cfg):
        state = SimState(t=1.0, h=surface)
        b, v, a = taylor_fields(state, taylor_cfg)
        b_t = central_difference(state, lambda s: taylor_fields(s, taylor_cfg)[0], taylor_cfg)
        expected = b_t - dot(v, gradient(b)) + a * dtn_apply(state.h, b, taylor_cfg)
        computed = gamma(state, taylor_cfg)
        assert (computed - expected).linf_norm() <= 1e-5


class TestTimeDerivativeA:
    def test_flat_surface(self, flat_state, taylor_cfg):
        assert time_derivative_a(flat_state, taylor_cfg).linf_norm() <= 1e-14

    def test_matches_central_difference(self, surface, taylor_cfg):
        state = SimState(t=1.0, h=surface)
        a_t = central_difference(state, lambda s: taylor_fields(s, taylor_cfg)[2], taylor_cfg)
        exact = time_derivative_a(state, taylor_cfg)
        assert (a_t - exact).l2_norm() <= 1e-3 * exact.l2_norm()


class TestLyapunovValue:
    def test_flat_surface(self, flat_state):
        assert lyapunov_value(flat_state, get_functional("square")) == 0.0

    def test_square_of_cosine(self, grid_1d):
        state = SimState(t=0.0, h=cosine(grid_1d, 1.0))
        assert lyapunov_value(state, get_functional("square")) == pytest.approx(math.pi)

    def test_quartic_of_cosine(self, grid_1d):
        state = SimState(t=0.0, h=cosine(grid_1d, 1.0))
        assert lyapunov_value(state, get_functional("quartic")) == pytest.approx(3 * math.pi / 4)

    def test_overflow(self, grid_1d):
        state = SimState(t=0.0, h=Field.constant(grid_1d, 800.0))
        with pytest.raises(DiagnosticError, match="I_exp"):
            lyapunov_value(state, get_functional("exp"))


class TestLyapunovDifferences:
    def test_constant_series(self):
        diffs = lyapunov_differences([(0.1 * i, 2.0) for i in range(5)])
        assert np.all(diffs.first == 0.0)
        assert np.all(diffs.second == 0.0)
        assert diffs.violation_count == 0

    def test_flags_increase_and_concavity(self):
        series = [(0.0, 1.0), (0.1, 0.9), (0.2, 0.85), (0.3, 0.9)]
        diffs = lyapunov_differences(series)
        assert diffs.monotonicity_violations == (2,)
        assert diffs.convexity_violations == ()
        concave = lyapunov_differences([(0.0, 1.0), (0.1, 0.99), (0.2, 0.9)])
        assert concave.convexity_violations == (0,)

    def test_too_short(self):
        with pytest.raises(DiagnosticError):
            lyapunov_differences([(0.0, 1.0), (0.1, 0.9)])

    def test_non_uniform_stride(self):
        with pytest.raises(DiagnosticError, match="uniform"):
            lyapunov_differences([(0.0, 1.0), (0.1, 0.9), (0.3, 0.8)])


class TestDissipation:
    def test_flat_surface(self, flat_state, taylor_cfg):
        assert dissipation_value(flat_state, get_functional("square"), taylor_cfg) == 0.0

    def test_square_matches_energy(self, state, taylor_cfg):
        value = dissipation_value(state, get_functional("square"), taylor_cfg)
        energy = 2.0 * inner(state.h, dtn_apply(state.h, state.h, taylor_cfg))
        assert value == pytest.approx(energy, rel=1e-10)
        assert value >= -1e-8

    @pytest.mark.parametrize("name", ["exp", "cosh", "negative_square"])
    def test_non_negative(self, state, taylor_cfg, name):
        assert dissipation_value(state, get_functional(name), taylor_cfg) >= -1e-8


class TestL2ConvexityIdentity:
    def test_flat_surface(self, flat_state, taylor_cfg):
        assert l2_convexity_identity(flat_state, taylor_cfg) == (0.0, 0.0)

    def test_identity(self, state, taylor_cfg):
        lhs, rhs = l2_convexity_identity(state, taylor_cfg)
        assert rhs >= -1e-8
        assert abs(lhs - rhs) <= 1e-5 * max(1.0, abs(rhs))


class TestEllipticResidual:
    def test_flat_surface(self, flat_state, taylor_cfg):
        assert elliptic_residual(flat_state, taylor_cfg).linf_norm() == 0.0

    def test_small_residual(self, small_surface, taylor_cfg):
        residual = elliptic_residual(SimState(t=0.0, h=small_surface), taylor_cfg)
        assert residual.l2_norm() <= 1e-4 * laplacian(small_surface).l2_norm()

    def test_forcing_forms_agree(self, state, taylor_cfg):
        adjoint_form, trace_form = elliptic_forcing_forms(state, taylor_cfg)
        assert (adjoint_form - trace_form).l2_norm() <= 1e-8 * max(1.0, trace_form.l2_norm())


class TestCordobaGap:
    def test_affine_is_exact(self, surface, taylor_cfg):
        f = band_limited_field(surface.grid, 3)
        gap = cordoba_gap(surface, f, get_functional("affine"), taylor_cfg)
        assert gap.linf_norm() <= 1e-12

    def test_constant_data(self, surface, taylor_cfg):
        f = Field.constant(surface.grid, 0.7)
        assert cordoba_gap(surface, f, get_functional("cosh"), taylor_cfg).linf_norm() <= 1e-10

    @pytest.mark.parametrize("name", [*CORDOBA_SUITE, "exp"])
    def test_sign(self, surface, taylor_cfg, name):
        assert cordoba_gap(surface, surface, get_functional(name), taylor_cfg).min() >= -1e-6


class TestOperatorL:
    def test_flat_surface(self, flat_state, taylor_cfg):
        f = band_limited_field(flat_state.h.grid, 8)
        result = operator_l(flat_state, f, taylor_cfg)
        assert (result - abs_derivative(f)).linf_norm() <= 1e-10

    def test_zero(self, state, taylor_cfg):
        assert operator_l(state, Field.zeros(state.h.grid), taylor_cfg).linf_norm() == 0.0

    def test_non_negative(self, state, taylor_cfg):
        f = band_limited_field(state.h.grid, 9)
        assert inner(f, operator_l(state, f, taylor_cfg)) >= -1e-8 * f.l2_norm() ** 2

    def test_rejects_non_positive_a(self, mocker, state, taylor_cfg):
        mocker.patch(
            "app.src.hele_shaw.diagnostics.dtn_apply",
            side_effect=lambda h, psi, cfg: psi * 20.0,
        )
        with pytest.raises(DiagnosticError, match="not positive"):
            operator_l(state, state.h, taylor_cfg)


class TestEntropy:
    def test_flat_surface(self, flat_state, taylor_cfg):
        result = entropy_residual(flat_state, 1.0, taylor_cfg)
        assert result.profile.linf_norm() == 0.0
        assert result.residual.linf_norm() <= 1e-14

    @pytest.mark.parametrize("m", [1.0, 10.0])
    def test_sign(self, small_surface, taylor_cfg, m):
        result = entropy_residual(SimState(t=0.0, h=small_surface), m, taylor_cfg)
        assert result.min_residual() >= -1e-5
        assert result.coefficient.min() >= -1e-7
        assert result.forcing.min() >= -1e-7

    def test_u_is_minus_twice_v(self, state, taylor_cfg):
        _, _, a = taylor_fields(state, taylor_cfg)
        u = entropy_profile(a, 1.0)
        assert (u + 2.0 * entropy_profile_v(a)).linf_norm() <= 1e-14

    def test_rejects_non_positive_constant(self, state, taylor_cfg):
        _, _, a = taylor_fields(state, taylor_cfg)
        with pytest.raises(DiagnosticError):
            entropy_profile(a, 0.0)


class TestMinASeries:
    def test_flat_run(self):
        assert min_a_series([record(0.1 * i, 1.0) for i in range(4)]) == []

    def test_single_dip(self):
        series = [record(0.0, 0.9), record(0.1, 0.91), record(0.2, 0.85), record(0.3, 0.92)]
        violations = min_a_series(series)
        assert len(violations) == 1
        assert violations[0].index == 2
        assert violations[0].baseline == 0.9

    def test_records_without_min_a_are_skipped(self):
        assert min_a_series([record(0.0, 0.9), record(0.1)]) == []

    def test_empty(self):
        with pytest.raises(DiagnosticError):
            min_a_series([])

    def test_missing_baseline(self):
        with pytest.raises(DiagnosticError):
            min_a_series([record(0.0), record(0.1, 0.9)])


class TestBuildHooks:
    def test_order_follows_registry(self, state, taylor_cfg):
        hooks = build_hooks(["min_a", "lyapunov"], [get_functional("square")])
        outputs = [hook(state, taylor_cfg) for hook in hooks]
        assert list(outputs[0]) == ["lyapunov"]
        assert list(outputs[1]) == ["min_a"]

    def test_all_hooks_feed_a_record(self, small_surface, taylor_cfg):
        state = SimState(t=0.0, h=small_surface)
        snapshot = record(0.0)
        for hook in build_hooks(HOOK_NAMES, [get_functional("square")]):
            snapshot.update(hook(state, taylor_cfg))
        assert snapshot.is_finite()
        assert snapshot.entropy_min_residual is not None
        assert snapshot.cordoba_min_gap is not None

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="Unknown diagnostics"):
            build_hooks(["viscosity"], [])
