import numpy as np
import pytest

_LINES = pytest.StashKey[list]()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def acceptance(request):
    """Record one summary line: ``acceptance(label, status, detail)``."""
    lines = request.config.stash[_LINES]

    def record(label: str, status: str, detail: str = ""):
        lines.append(f"{status:<8} {label}: {detail}".rstrip())
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
