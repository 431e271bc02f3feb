import numpy as np
import pytest

_RESULTS = {}


@pytest.fixture
def criterion():
    """Record ``(id, passed, detail)`` lines for the end-of-run acceptance summary."""

    def record(cid, passed, detail):
        _RESULTS[cid] = (bool(passed), detail)
        return passed

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_RESULTS, key=lambda c: (int("".join(ch for ch in c if ch.isdigit())), c)):
        passed, detail = _RESULTS[cid]
        terminalreporter.write_line(f"criterion {cid}: {'PASS' if passed else 'FAIL'}  {detail}")
