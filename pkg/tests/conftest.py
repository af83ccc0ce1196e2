import pytest

from fjsim import _backend

CRITERIA = {}


def record_criterion(num, title, passed, detail=""):
    CRITERIA[num] = (title, bool(passed), detail)


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(CRITERIA):
        title, ok, detail = CRITERIA[num]
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:>2}. {title}: {detail}")


requires_compiled = pytest.mark.skipif(_backend.compiled is None, reason="compiled kernels not built")
