"""Shared pytest hooks: the acceptance tests record one line per criterion
here, and the terminal summary echoes them so a plain ``pytest -v`` run always
shows the per-criterion outcomes."""

acceptance_lines = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)
