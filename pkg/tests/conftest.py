import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

_RESULTS = []


def record(number, title, passed, detail=""):
    """Store one acceptance outcome and echo it to the real terminal."""
    line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    _RESULTS.append((number, line))
    sys.__stdout__.write("\n" + line + "\n")
    sys.__stdout__.flush()
    return passed


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_RESULTS):
        terminalreporter.write_line(line)
