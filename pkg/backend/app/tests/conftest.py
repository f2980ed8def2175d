"""Shared fixtures: grids, backend settings and reference surfaces."""

import pytest

from app.src.hele_shaw.dtn import DtnBackend, DtnConfig
from app.src.hele_shaw.dynamics import SimState, StepperConfig
from app.src.hele_shaw.grid import Field, TorusGrid, build_grid

from .factories import cosine


@pytest.fixture
def grid_1d() -> TorusGrid:
    return build_grid(1, 64)


@pytest.fixture
def grid_2d() -> TorusGrid:
    return build_grid(2, 32)


@pytest.fixture
def taylor_cfg() -> DtnConfig:
    return DtnConfig()


@pytest.fixture
def elliptic_cfg() -> DtnConfig:
    return DtnConfig(backend=DtnBackend.ELLIPTIC)


@pytest.fixture
def surface(grid_1d: TorusGrid) -> Field:
    """h = 0.1 cos x."""
    return cosine(grid_1d, 0.1)


@pytest.fixture
def small_surface(grid_1d: TorusGrid) -> Field:
    """h = 0.05 cos x."""
    return cosine(grid_1d, 0.05)


@pytest.fixture
def state(surface: Field) -> SimState:
    return SimState(t=0.0, h=surface)


@pytest.fixture
def flat_state(grid_1d: TorusGrid) -> SimState:
    return SimState(t=0.0, h=Field.zeros(grid_1d))


@pytest.fixture
def short_stepper() -> StepperConfig:
    return StepperConfig(dt=1e-3, t_end=0.02)
