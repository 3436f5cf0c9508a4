import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import acceptance_runs  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    lines = acceptance_runs.REPORT
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
