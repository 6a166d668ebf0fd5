"""Replays acceptance-gate PASS/FAIL lines after the run.

Capture swallows per-test prints on success, so the acceptance tests record
their one-line verdicts here and a summary hook echoes them at the end.
"""

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.line(line)
