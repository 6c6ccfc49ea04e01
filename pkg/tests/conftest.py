import pytest

# (criterion, passed, detail) lines collected by the acceptance suite
ACCEPTANCE = []


@pytest.fixture
def record():
    def add(num, title, ok, detail):
        line = f"criterion {num:>2} {'PASS' if ok else 'FAIL'}: {title}; {detail}"
        ACCEPTANCE.append((num, line))
        print(line)
        return ok
    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
