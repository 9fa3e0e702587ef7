import warnings

import pytest
from hypothesis import settings

settings.register_profile("escm", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("escm")


@pytest.fixture(autouse=True)
def _quiet_shape_warnings():
    # Beta laws outside alpha, beta > 1 warn by design; tests that care check explicitly.
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*unimodal.*")
        yield


ACCEPTANCE_LINES = []


@pytest.fixture
def report(capsys):
    """Print one acceptance line immediately and keep it for the session summary."""

    def emit(criterion, passed, detail):
        line = f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return passed

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
