"""Collects acceptance outcomes and prints one line per criterion after the run."""

import pytest

_RESULTS = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    key = props["criterion"]
    failed = report.failed
    if report.when == "call" or failed:
        prev = _RESULTS.get(key)
        status = "FAIL" if failed else ("SKIP" if report.skipped else "PASS")
        if prev is None or prev[0] == "PASS":
            _RESULTS[key] = (status, props.get("title", ""), props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_RESULTS):
        status, title, detail = _RESULTS[key]
        line = f"criterion {key}: {status}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture
def criterion(request, record_property):
    """``criterion(n, title)`` tags the test; returns a setter for the detail text."""

    def tag(number, title):
        record_property("criterion", number)
        record_property("title", title)

        def detail(text):
            record_property("detail", text)
            print(f"criterion {number}: {text}")

        return detail

    return tag
