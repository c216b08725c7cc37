import pytest

_OUTCOMES: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(cid, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        cid, title = mark.args
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        if rep.skipped:
            status = "SKIP"
        else:
            status = "PASS" if rep.passed else "FAIL"
        _OUTCOMES[cid] = {"title": title, "status": status, "detail": detail}


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_OUTCOMES, key=lambda c: (len(c), c)):
        o = _OUTCOMES[cid]
        line = f"criterion {cid}: {o['status']}  {o['title']}"
        if o["detail"]:
            line += f"  [{o['detail']}]"
        terminalreporter.write_line(line)
