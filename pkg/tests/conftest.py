import time

import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


class _Notes:
    def __init__(self):
        self.lines = []
        self.start = time.perf_counter()

    def __call__(self, text):
        self.lines.append(str(text))

    def elapsed(self):
        return time.perf_counter() - self.start


@pytest.fixture
def note(request):
    """Collects measured values printed next to the criterion verdict."""
    notes = _Notes()
    request.node._criterion_notes = notes
    return notes


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _RESULTS.setdefault(number, {"title": title, "passed": True, "seen": False, "notes": []})
    if report.when == "call" or report.failed:
        entry["seen"] = True
        entry["passed"] = entry["passed"] and report.passed
    if report.when == "teardown":
        notes = getattr(item, "_criterion_notes", None)
        if notes is not None:
            entry["notes"].extend(notes.lines)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        if not entry["seen"]:
            verdict = "SKIP"
        else:
            verdict = "PASS" if entry["passed"] else "FAIL"
        tr.write_line(f"criterion {number:>2}: {verdict}  {entry['title']}")
        for line in entry["notes"]:
            tr.write_line(f"               {line}")
