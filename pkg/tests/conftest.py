"""Shared test plumbing: the acceptance verdict registry.

Acceptance tests print one ACCEPTANCE Cn PASS/FAIL line each; pytest
captures per-test stdout, so the lines are replayed in the terminal
summary where they stay visible regardless of outcome.
"""

VERDICTS: list[str] = []


def record_verdict(n: int, ok: bool) -> bool:
    line = f"ACCEPTANCE C{n} {'PASS' if ok else 'FAIL'}"
    VERDICTS.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if VERDICTS:
        terminalreporter.section("acceptance verdicts")
        for line in VERDICTS:
            terminalreporter.write_line(line)
