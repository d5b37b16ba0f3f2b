import numpy as np
import pytest

from pkslab.potentials import Nonlinearity, Potentials


@pytest.fixture(scope="session")
def pot3():
    return Potentials(Nonlinearity.power_law(3))


@pytest.fixture(scope="session")
def pot_cache():
    cache = {}

    def get(m=3.0, beta=1.0, sigma=1.0):
        key = (m, beta, sigma)
        if key not in cache:
            cache[key] = Potentials(Nonlinearity.power_law(m, beta, sigma))
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
