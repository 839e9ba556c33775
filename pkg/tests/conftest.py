import pytest

# one line per acceptance criterion, filled in by test_acceptance.py
VERDICTS = []


@pytest.fixture
def verdict(capsys):
    def record(number, name, ok, detail=""):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip()
        VERDICTS.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance")
        for line in sorted(VERDICTS):
            terminalreporter.write_line(line)
