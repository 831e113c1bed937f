import numpy as np
import pytest

from geoquant.measure import from_points

_CRITERIA = {}
_DETAILS = {}


def pytest_runtest_makereport(item, call):
    if call.when == "call" and item.get_closest_marker("criterion"):
        k = item.get_closest_marker("criterion").args[0]
        _CRITERIA[k] = "PASS" if call.excinfo is None else "FAIL"


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        detail = "; ".join(_DETAILS.get(k, []))
        terminalreporter.write_line(f"criterion {k:2d}: {_CRITERIA[k]}  {detail}")


@pytest.fixture
def note(request):
    """Attach a measured value to the acceptance summary line of this test."""
    k = request.node.get_closest_marker("criterion").args[0]
    _DETAILS[k] = []
    return _DETAILS[k].append


@pytest.fixture
def triangle():
    s = 1.0 / np.sqrt(3.0)
    return from_points([[-1.0, -s], [1.0, -s], [0.0, np.sqrt(3.0) - s]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
