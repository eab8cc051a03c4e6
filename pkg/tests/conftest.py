import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    reports = []
    for key in ("passed", "failed"):
        reports.extend(r for r in terminalreporter.stats.get(key, [])
                       if r.when == "call" and "test_acceptance" in r.nodeid)
    if not reports:
        return
    terminalreporter.section("acceptance criteria")
    for r in sorted(reports, key=lambda r: r.nodeid):
        status = "PASS" if r.passed else "FAIL"
        terminalreporter.write_line(f"{status}  {r.nodeid.split('::')[-1]}")
