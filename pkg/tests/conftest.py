import pytest

_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects ``(label, passed, detail)`` rows for the end-of-run table."""
    return request.config.stash.setdefault(_ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = config.stash.get(_ACCEPTANCE_KEY, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in sorted(rows, key=lambda r: _order(r[0])):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {label}: {detail}")


def _order(label):
    num = label.split()[1]
    digits = "".join(ch for ch in num if ch.isdigit())
    return int(digits), num
