"""Shared pytest hooks: surface acceptance-criterion results in the
terminal summary, where output capture cannot swallow them."""

CRITERION_LINES = []


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)
