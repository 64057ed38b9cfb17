import logging

import numpy as np
import pytest

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance_log(request):
    """Record one ``criterion k: PASS|FAIL ...`` line, shown in the summary."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash[_ACCEPTANCE].append(line)
        print(line)
        return ok

    return record


@pytest.fixture(autouse=True)
def _quiet_exhaustion_logs(caplog):
    caplog.set_level(logging.ERROR, logger="distseq")
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
