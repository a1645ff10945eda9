import datetime as dt

import numpy as np
import pytest
from hypothesis import settings

from transitbench.data import CalendarSpec, RidershipPanel, Shock, SyntheticScenario, generate_synthetic

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def small_panel():
    """3 stations x 120 days, mild shock on day 80."""
    sc = SyntheticScenario(n_stations=3, n_days=120, holiday_days=(10, 50),
                           shocks=(Shock(80, None, 0.5),))
    return generate_synthetic(sc, 3)


def make_panel(counts, start=dt.date(2020, 1, 6), calendar=None):
    counts = np.asarray(counts)
    return RidershipPanel.from_counts([f"s{i}" for i in range(counts.shape[0])], start, counts,
                                      calendar or CalendarSpec())


# one line per acceptance criterion, echoed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
