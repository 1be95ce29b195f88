import numpy as np
import pytest

from repgame.scenarios import (
    benchmark_scenario,
    construction_scenario,
    drift_profile,
    drift_scenario,
    perturbed_scenario,
)


@pytest.fixture(scope="session")
def bench():
    return benchmark_scenario()


@pytest.fixture(scope="session")
def perturbed():
    return perturbed_scenario(0.1)


@pytest.fixture(scope="session")
def drift():
    s = drift_scenario()
    return s, drift_profile(s)


@pytest.fixture(scope="session")
def construction():
    return construction_scenario()


def constant_profile(s, alpha):
    """Every strategic type plays ``alpha`` forever: beliefs never move."""
    from repgame.strategies import StrategyProfile

    return StrategyProfile.build(s, {st: alpha for st in s.game.states})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
