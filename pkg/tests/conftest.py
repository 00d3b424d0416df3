from pathlib import Path

import pytest

from meanrev.marketdata import load_csv

DATA = Path(__file__).parent / "data"
FIXTURE = DATA / "aapl_fixture.csv"

# three trading years, the tail of the four-year fixture
THREE_YEARS = 756


@pytest.fixture(scope="session")
def fixture_bars():
    return load_csv(FIXTURE)


@pytest.fixture(scope="session")
def fixture_3y(fixture_bars):
    return fixture_bars[len(fixture_bars) - THREE_YEARS:]


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
