"""Shared test plumbing: the acceptance-criteria report channel.

Acceptance tests call `report(...)` as they measure; the collected lines are
replayed in a terminal-summary section so every criterion shows exactly one
PASS/FAIL line in plain `pytest -v` output, passing or not.
"""
import sys

CRITERION_LINES: list[str] = []


def report(num: int, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    line = f"[criterion {num:02d}] {status} — {detail}"
    CRITERION_LINES.append(line)
    print(line, file=sys.__stderr__)  # live line when capture is off


def pytest_terminal_summary(terminalreporter):
    if not CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in CRITERION_LINES:
        terminalreporter.write_line(line)
