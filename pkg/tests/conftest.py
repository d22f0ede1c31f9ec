import time

import pytest

SUITE_BUDGET_S = 300.0
_results: dict[int, list] = {}


def pytest_sessionstart(session):
    session.config._ownvoice_start = time.perf_counter()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or report.when not in ("setup", "call"):
        return
    number, title = mark.args
    entry = _results.setdefault(number, [title, True, []])
    if report.failed:
        entry[1] = False
    entry[2].extend(v for k, v in report.user_properties if k == "detail")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _results:
        return
    elapsed = time.perf_counter() - config._ownvoice_start
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_results):
        title, ok, details = _results[number]
        suffix = f" ({'; '.join(details)})" if details else ""
        tr.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {title}{suffix}")
    ok = elapsed < SUITE_BUDGET_S
    tr.write_line(f"suite runtime: {'PASS' if ok else 'FAIL'} - {elapsed:.1f} s (budget {SUITE_BUDGET_S:.0f} s)")


def pytest_sessionfinish(session, exitstatus):
    elapsed = time.perf_counter() - session.config._ownvoice_start
    if _results and elapsed >= SUITE_BUDGET_S and exitstatus == 0:
        session.exitstatus = 1
