import pytest

from rwdre import RateFamily, independent_refresh
from rwdre.lattice import BINARY


def running_rates(eps: float = 0.2) -> RateFamily:
    specs = [{"z": [1], "base": 1.0, "slope": 1.0, "site": [0]},
             {"z": [-1], "base": 1.0, "slope": -1.0, "site": [0]}]
    return RateFamily.affine(specs, BINARY, eps)


@pytest.fixture
def refresh_model():
    return independent_refresh(1.0, 0.5, L=256, d=1)


@pytest.fixture
def running_alpha():
    return running_rates(0.2)


@pytest.fixture
def poisson_alpha():
    return RateFamily.constant({1: 1.0})


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
