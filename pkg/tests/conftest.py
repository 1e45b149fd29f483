import sys

import numpy as np
import pytest

from uhihex.simulate import hex_parallelogram
from uhihex.weights import build_weights


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def w30():
    """900-hex parallelogram lattice."""
    return build_weights(hex_parallelogram(30, 30))


@pytest.fixture(scope="session")
def w20():
    return build_weights(hex_parallelogram(20, 20))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
