import math

import pytest

from models.ball import BallConfig, RadialSource

J0_FIRST_ZERO = 2.404825557695773
J1_PRIME_FIRST_ZERO = 1.841183781340659
MU2_UNIT_DISK = J1_PRIME_FIRST_ZERO ** 2
M0_UNIT_DISK = 2.0 * math.pi / MU2_UNIT_DISK


@pytest.fixture
def unit_disk() -> BallConfig:
    return BallConfig(2, 1.0)


@pytest.fixture
def unit_ball() -> BallConfig:
    return BallConfig(3, 1.0)


@pytest.fixture
def uniform_source() -> RadialSource:
    return RadialSource.constant(1.0)


@pytest.fixture
def increasing_source() -> RadialSource:
    """f(r) = 1 + r^2."""
    return RadialSource((1.0, 0.0, 1.0))


@pytest.fixture
def decreasing_source() -> RadialSource:
    """f(r) = 2 - r^2."""
    return RadialSource((2.0, 0.0, -1.0))


@pytest.fixture
def exponential_source() -> RadialSource:
    """Degree-10 Taylor polynomial of exp(-3r)."""
    return RadialSource(tuple((-3.0) ** k / math.factorial(k) for k in range(11)))
