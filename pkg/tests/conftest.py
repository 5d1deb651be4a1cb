import pytest


@pytest.fixture
def criterion_report(request):
    """Print one pass/fail line per acceptance criterion, capture or not."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def _report(criterion, ok, detail):
        status = "PASS" if ok else "FAIL"
        line = f"[{status}] criterion {criterion}: {detail}"
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        else:
            print(line)

    return _report
