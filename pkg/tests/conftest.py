import pytest

# criterion number -> list of (label, passed, detail)
_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record acceptance checks; the terminal summary prints one line per criterion."""

    def record(number, label, passed, detail=""):
        passed = bool(passed)
        _ACCEPTANCE.setdefault(number, []).append((label, passed, detail))
        print(f"criterion {number} [{label}]: {'PASS' if passed else 'FAIL'} {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        checks = _ACCEPTANCE[number]
        ok = all(p for _, p, _ in checks)
        failed = [label for label, p, _ in checks if not p]
        suffix = "" if ok else f"  (failing: {', '.join(failed)})"
        tr.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}{suffix}")
        for label, p, detail in checks:
            tr.write_line(f"    {'ok  ' if p else 'FAIL'} {label}: {detail}")
