import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

# filled by test_acceptance.py, one line per criterion
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
