"""Shared pytest plumbing: a verdict summary for the acceptance suite."""

VERDICTS: list[str] = []


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"acceptance {number} {'PASS' if ok else 'FAIL'}: {title} | {detail}"
    VERDICTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if VERDICTS:
        terminalreporter.section("acceptance verdicts")
        for line in VERDICTS:
            terminalreporter.write_line(line)
