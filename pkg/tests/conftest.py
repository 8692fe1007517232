import numpy as np
import pytest

from pmcw_isac.config import ScenarioConfig
from pmcw_isac.t3former import ModelConfig


@pytest.fixture
def desk():
    return ScenarioConfig.desk()


@pytest.fixture
def table1():
    return ScenarioConfig.table1()


@pytest.fixture
def toy_model():
    return ModelConfig(L=7, n_t=2, M=4, d_model=16, d_key=8, n_heads=2, n_layers_1=1, n_layers_2=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance(request):
    """``acceptance(number, ok, detail)`` prints and records one criterion line."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def report(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        print(line)
        lines.append((number, line))
        return ok
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda x: str(x[0])):
            terminalreporter.write_line(line)
