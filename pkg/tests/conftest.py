import numpy as np
import pytest

from sapa import _backend


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=_backend.BACKENDS)
def backend(request):
    return request.param


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
