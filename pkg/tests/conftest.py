import pytest

# criterion number -> list of (passed, detail) parts
_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record one part of an acceptance criterion for the end-of-run summary."""

    def record(number, passed, detail):
        _ACCEPTANCE.setdefault(number, []).append((bool(passed), detail))
        print(f"acceptance #{number} {'PASS' if passed else 'FAIL'}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        parts = _ACCEPTANCE[number]
        ok = all(p for p, _ in parts)
        failed = [d for p, d in parts if not p]
        detail = "; ".join(failed) if failed else "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"#{number} {'PASS' if ok else 'FAIL'}  {detail}")
