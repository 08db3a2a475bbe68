import pytest

ACCEPTANCE_LINES: dict[str, str] = {}


@pytest.fixture
def record():
    """Store a one-line verdict for the acceptance summary."""

    def _record(name: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE_LINES[name] = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_LINES, key=lambda s: (len(s.split()[0]), s)):
        terminalreporter.write_line(ACCEPTANCE_LINES[name])
