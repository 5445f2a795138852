import numpy as np
import pytest

from podeig.mesh_fem import assemble_problem


@pytest.fixture(scope="session")
def small_two_param():
    return assemble_problem("two_param", 16)


@pytest.fixture(scope="session")
def small_three_param():
    return assemble_problem("three_param", 16)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_spd(rng, n, shift=1.0):
    X = rng.standard_normal((n, n))
    return X @ X.T + shift * n * np.eye(n)


def random_symmetric(rng, n):
    X = rng.standard_normal((n, n))
    return X + X.T


_ACCEPTANCE = {}


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None or call.when != "call":
        return
    number, text = marker.args
    ok = call.excinfo is None
    prev = _ACCEPTANCE.get(number, (True, text))
    _ACCEPTANCE[number] = (prev[0] and ok, text)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        ok, text = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {text}")
