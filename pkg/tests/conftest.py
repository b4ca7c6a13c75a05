import numpy as np
import pytest

from klrisk.penalized import bathtub_hazard, make_knots, simulate_survival


@pytest.fixture(scope="session")
def bathtub_data():
    """400 subjects from a bathtub-shaped hazard, administratively censored at 4."""
    return simulate_survival(bathtub_hazard, 400, seed=1, censor_time=4.0)


@pytest.fixture(scope="session")
def bathtub_basis(bathtub_data):
    return make_knots(bathtub_data)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "passed": True, "seconds": 0.0})
    entry["seconds"] += report.duration
    if report.failed:
        entry["passed"] = False


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        status = "PASS" if entry["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}  {status}  {entry['seconds']:7.2f} s  {entry['title']}")
