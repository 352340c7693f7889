import os
import re

from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=100,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("thorough", max_examples=1000, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


_OUTCOMES: dict[str, str] = {}
_CRITERION = re.compile(r"test_acceptance\.py::test_a(\d+)_")


def pytest_runtest_logreport(report):
    match = _CRITERION.search(report.nodeid)
    if not match or (report.when != "call" and report.passed):
        return
    name = f"A{match.group(1)}"
    if report.failed or report.skipped:
        _OUTCOMES[name] = "FAIL" if report.failed else "SKIP"
    else:
        _OUTCOMES.setdefault(name, "pass")


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    from helpers import ACCEPTANCE

    terminalreporter.write_sep("=", "acceptance criteria")
    for name in sorted(_OUTCOMES, key=lambda n: int(n[1:])):
        details = " | ".join(ACCEPTANCE.get(name, [])) or "no result recorded"
        terminalreporter.write_line(f"{name:4s} {_OUTCOMES[name]:4s} {details}")
