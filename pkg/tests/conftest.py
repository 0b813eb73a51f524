import numpy as np
import pytest

from kinetic.stepper import initial_state
from model.builder import build_scenario, config_from_dict
from model.grid import PhaseGrid
from model.initial import make_initial_data
from model.spec import ModelSpec

from helpers import tiny_config


@pytest.fixture
def grid():
    return PhaseGrid.build(dim=1, x_nodes=32, x_extent=8.0, x_topology="periodic", v_count=2, m_nodes=32, m_max=2.5)


@pytest.fixture
def spec(grid):
    return ModelSpec.from_parameters(grid, eps=0.5)


@pytest.fixture
def initial(grid, spec):
    return make_initial_data(grid, spec, profile="gaussian", width=1.0)


@pytest.fixture
def state(grid, spec, initial):
    return initial_state(grid, spec, initial)


@pytest.fixture
def scenario():
    return build_scenario(config_from_dict(tiny_config()))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

