"""Prints a one-line verdict per acceptance criterion after the run.

The acceptance tests are named ``test_criterion_<n>_...``; this hook
collects their outcomes and writes a compact PASS/FAIL table into the
terminal summary so the verdicts are visible even when stdout capture
swallows the in-test prints.
"""

import re

_CRITERION = re.compile(r"test_criterion_(\d+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts = {}
    for outcome, label in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" not in nodeid:
                continue
            match = _CRITERION.search(nodeid)
            if not match:
                continue
            n = int(match.group(1))
            if label == "FAIL" or n not in verdicts:
                verdicts[n] = label
    if not verdicts:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for n in sorted(verdicts):
        terminalreporter.write_line(f"  criterion {n}: {verdicts[n]}")
