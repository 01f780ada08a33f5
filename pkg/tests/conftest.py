import numpy as np
import pytest

from capwave.wave_operators import FlowParameters


@pytest.fixture
def params():
    return FlowParameters(h=1.0, k=1.0, g=9.81, gamma=1.0, sigma=0.074, N=32)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(mod.RESULTS):
            terminalreporter.write_line(mod.RESULTS[k])
