import pytest

_results = []


@pytest.fixture
def detail(request):
    """Attach a one-line measurement summary to an acceptance test's report."""
    def add(text):
        request.node.user_properties.append(("detail", text))
    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number, title = marker.args
        details = "; ".join(v for k, v in item.user_properties if k == "detail")
        status = "PASS" if report.outcome == "passed" else "FAIL"
        _results.append((number, status, title, details))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, title, details in sorted(_results):
        line = f"criterion {number}: {status}  {title}"
        if details:
            line += f"  [{details}]"
        terminalreporter.write_line(line)
