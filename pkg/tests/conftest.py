from __future__ import annotations

import pytest
from hypothesis import settings

# numba compiles on first call; wall-clock deadlines would flag compilation, not slowness
settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

_LINES_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES_KEY] = []


@pytest.fixture
def report(request):
    """Append one summary line; all lines are printed at the end of the run."""
    lines = request.config.stash[_LINES_KEY]
    return lines.append


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
