import re

_ACCEPTANCE = {}
_DOCS = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::\w+::test_c(\d+)_", report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    if report.when == "call" or report.outcome != "passed":
        _ACCEPTANCE[n] = _ACCEPTANCE.get(n, True) and report.outcome == "passed"


def pytest_collection_modifyitems(items):
    for item in items:
        m = re.search(r"::test_c(\d+)_", item.nodeid)
        if m and "test_acceptance.py" in item.nodeid:
            _DOCS[int(m.group(1))] = (item.function.__doc__ or item.name).strip().splitlines()[0]


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        status = "PASS" if _ACCEPTANCE[n] else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {_DOCS.get(n, '')}")
