import numpy as np
import pytest

from contactline.config import Config, PhysicalParams
from contactline.discretization import DiscreteSpace, build_initial_basis, discrete_dimension, identity_geometry
from contactline.equilibrium import solve_equilibrium

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(':'))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def cfg():
    return Config()


@pytest.fixture(scope="session")
def params():
    return PhysicalParams()


@pytest.fixture(scope="session")
def indices(cfg):
    return cfg.sobolev_indices()


@pytest.fixture(scope="session")
def law(cfg):
    return cfg.contact_law()


@pytest.fixture(scope="session")
def zeta0(params):
    return solve_equilibrium(params)


@pytest.fixture(scope="session")
def space(zeta0, params):
    return DiscreteSpace(zeta0, params, 8, 6)


@pytest.fixture(scope="session")
def geo_id(space):
    return identity_geometry(space)


@pytest.fixture(scope="session")
def basis24(space, geo_id, params):
    return build_initial_basis(space, geo_id, params, 0.1, 24)


@pytest.fixture(scope="session")
def basis_full(space, geo_id, params):
    return build_initial_basis(space, geo_id, params, 0.1, discrete_dimension(space))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
