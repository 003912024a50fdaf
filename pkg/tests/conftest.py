"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""

import pytest

_OUTCOMES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion check")


@pytest.fixture()
def detail(request):
    """Attach a one-line measurement summary to the acceptance line."""

    def note(text):
        request.node.user_properties.append(("detail", text))

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        details = [v for k, v in item.user_properties if k == "detail"]
        if report.skipped and isinstance(report.longrepr, tuple):
            details.append(report.longrepr[2].removeprefix("Skipped: "))
        _OUTCOMES.setdefault(number, []).append((title, status, item.name, details))


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        checks = _OUTCOMES[number]
        statuses = {s for _, s, _, _ in checks}
        overall = "FAIL" if "FAIL" in statuses else ("SKIP" if statuses == {"SKIP"} else "PASS")
        title = checks[0][0]
        terminalreporter.write_line(f"{overall} criterion {number}: {title}")
        for _, status, name, details in checks:
            suffix = f" | {'; '.join(details)}" if details else ""
            terminalreporter.write_line(f"    {status} {name}{suffix}")
