import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from duio import scenario as S  # noqa: E402

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def sc1():
    return S.load_bundled("1")


@pytest.fixture(scope="session")
def sc2():
    return S.load_bundled("2")


@pytest.fixture(scope="session")
def sc3():
    return S.load_bundled("3")


@pytest.fixture(scope="session")
def model(sc1):
    return sc1.model


@pytest.fixture(scope="session")
def shipped(sc1):
    """Shipped gains with 4 significant digits, P_i = 0.1 I."""
    return sc1.design


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
