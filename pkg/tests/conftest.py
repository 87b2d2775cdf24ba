"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""
_outcomes = {}
_markers = {}


def pytest_runtest_logreport(report):
    args = _markers.get(report.nodeid)
    if args is None or report.when == "teardown":
        return
    number, title = args
    passed, _ = _outcomes.get(number, (True, title))
    _outcomes[number] = (passed and report.outcome == "passed", title)


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None:
            _markers[item.nodeid] = mark.args


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        passed, title = _outcomes[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {title}")
