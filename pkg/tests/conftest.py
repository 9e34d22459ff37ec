import numpy as np
import pytest

from ekinv.field import Basis, WeightedNorm, covariance_darcy, covariance_elliptic
from ekinv.forward import DarcyGrid, DarcyModel, EllipticModel, ForwardModel, ObservationSpec

ACCEPTANCE_LINES = []


class IdentityModel(ForwardModel):
    """G = I on a sine basis; the simplest linear model."""

    name = "identity"
    linear = True

    def __init__(self, size):
        super().__init__(Basis.sine(size), ObservationSpec.all_coefficients(size))

    def evaluate(self, u):
        return np.array(u.coeffs)

    def matrix(self):
        return np.eye(self.input_basis.dim)


class ConstantModel(ForwardModel):
    """Ignores its input."""

    name = "constant"

    def __init__(self, size, data_size=3):
        super().__init__(Basis.sine(size), ObservationSpec.all_coefficients(data_size))

    def evaluate(self, u):
        return np.ones(self.data_size)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def elliptic_small():
    K = 64
    return covariance_elliptic(10.0, K), EllipticModel(K), WeightedNorm.white(0.01)


@pytest.fixture(scope="session")
def elliptic_full():
    K = 512
    return covariance_elliptic(10.0, K), EllipticModel(K), WeightedNorm.white(0.01)


@pytest.fixture(scope="session")
def darcy_small():
    grid = DarcyGrid(32)
    return covariance_darcy(0.5, 1.3, 16), DarcyModel(grid, 16, 4.0), WeightedNorm.white(7.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
