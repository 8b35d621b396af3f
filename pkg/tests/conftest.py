import datetime as dt

import numpy as np
import pytest

from wxkrig.geo import ObservationPanel, Station
from wxkrig.interpolate import FieldSnapshot

KM_PER_DEG = np.pi * 6371.0 / 180.0


def make_snapshot(coords, values, ids=None, elevs=None):
    ids = ids or [f"S{i}" for i in range(len(coords))]
    elevs = elevs if elevs is not None else [None] * len(coords)
    stations = [Station(i, float(a), float(b), e) for i, (a, b), e in zip(ids, coords, elevs)]
    return FieldSnapshot(stations, values)


def constant_panel(n_stations=12, start=dt.date(1990, 1, 1), days=60, value=3.0, seed=0):
    rng = np.random.default_rng(seed)
    stations = [Station(f"C{i:02d}", float(rng.uniform(35, 40)), float(rng.uniform(-95, -90)),
                        float(rng.uniform(100, 900)))
                for i in range(n_stations)]
    dates = [start + dt.timedelta(days=i) for i in range(days)]
    return ObservationPanel(stations, dates, np.full((n_stations, days), value))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (report.when != "call" and not report.skipped and report.passed):
        return
    number, text = mark.args
    if report.skipped:
        status = "SKIP"
    elif report.failed:
        status = "FAIL"
    elif report.when == "call":
        status = "PASS"
    else:
        return
    prev = _CRITERIA.get(number)
    if prev is None or prev[0] == "PASS":
        _CRITERIA[number] = (status, text)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, text = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {text}")
