"""Shared test plumbing: print the acceptance-criterion verdicts.

Acceptance tests record one verdict per criterion; this terminal-summary
hook prints them as a block at the end of the run so the pass/fail
lines survive pytest's output capture.
"""

from acceptance_report import _criteria


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict in _criteria:
        terminalreporter.write_line(f"{verdict}  {name}")
