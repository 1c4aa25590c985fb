import numpy as np
import pytest

from distopt.scenarios import load_scenario


@pytest.fixture(scope="session")
def energy_hub():
    return load_scenario("energy_hub")


@pytest.fixture(scope="session")
def gas_lift():
    return load_scenario("gas_lift")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_acceptance_lines = []


def record_acceptance(line: str) -> None:
    _acceptance_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
