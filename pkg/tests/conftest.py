import numpy as np
import pytest

from meteranomaly.series import Channel, MeterSeries, TimeGrid

# 2023-01-01T00:00:00Z
T0 = 1672531200


def make_series(values, meter="M1", channel=Channel.P_kW, start=T0, step=1800, tz=0):
    values = np.asarray(values, dtype=float)
    return MeterSeries(meter, channel, TimeGrid(start, step, values.shape[0]), values, tz)


def write_text(path, text):
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def series_factory():
    return make_series


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def check(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
