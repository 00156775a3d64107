"""Shared pytest hooks.

Collects the one-line pass/fail records emitted by the acceptance tests and
prints them as a scoreboard at the end of the run, where output capture no
longer hides them.
"""

ACCEPTANCE_SCOREBOARD: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_SCOREBOARD:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_SCOREBOARD:
            terminalreporter.write_line(line)
