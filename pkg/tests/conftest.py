import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# one "[PASS]/[FAIL] Cn ..." line per acceptance criterion, filled by test_acceptance
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
