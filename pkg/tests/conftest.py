import numpy as np
import pytest

from ergochain.kernel import FunctionKernel, Kernel
from ergochain.points import RealVector, Space

R1 = Space("real", 1)


class IdentityKernel(Kernel):
    name = "IDENTITY"

    def __init__(self, dim=1):
        self.space = Space("real", dim)

    def advance(self, x, rng):
        return x.copy()


class ShiftKernel(Kernel):
    """x -> x + 1, deterministic."""

    name = "SHIFT"
    space = R1

    def advance(self, x, rng):
        return x + 1.0


class FlipKernel(Kernel):
    """Two-state cycle 0 <-> 1."""

    name = "FLIP"
    space = R1

    def advance(self, x, rng):
        return 1.0 - x


class CoinKernel(Kernel):
    """Jumps to 0 or 1 with probability 1/2 each, one uniform per step."""

    name = "COIN"
    space = R1

    def advance(self, x, rng):
        return np.array([0.0 if rng.uniform() <= 0.5 else 1.0])


def doubling_step(x, rng):
    return RealVector((2.0 * x.coords[0],))


@pytest.fixture
def identity():
    return IdentityKernel()


@pytest.fixture
def shift():
    return ShiftKernel()


@pytest.fixture
def flip():
    return FlipKernel()


@pytest.fixture
def coin():
    return CoinKernel()


@pytest.fixture
def doubling():
    return FunctionKernel("DOUBLING", R1, doubling_step)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
