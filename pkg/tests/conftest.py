import pytest

CRITERIA = {
    1: "first-level Monte Carlo law matches exhaustive enumeration",
    2: "second-level Monte Carlo law matches exhaustive enumeration",
    3: "inner blocks never leave their parent block",
    4: "ARCH(1) variance coverage within 0.03 of the published row",
    5: "calibrated and studentized bounds improve on the basic bound",
    6: "calibrated and studentized coverages agree within 0.02",
    7: "MA(1) lag-1 GK coverage at alpha 0.05 near 0.022",
    8: "study output byte-identical across worker counts",
    9: "analytic gradients match central differences",
    10: "property suite",
}

_outcomes: dict[int, list[bool]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        _outcomes.setdefault(marker.args[0], []).append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        if n not in _outcomes:
            status = "NOT RUN"
        else:
            status = "PASS" if all(_outcomes[n]) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {status:7s} {CRITERIA[n]}")
