# acceptance outcomes, keyed by criterion id, filled from test reports
_criteria: dict[str, list] = {}


def pytest_runtest_logreport(report):
    ac = dict(report.user_properties).get("criterion")
    if ac is None:
        return
    entry = _criteria.setdefault(ac, [True, ""])
    if report.failed:
        entry[0] = False
    detail = dict(report.user_properties).get("detail")
    if detail:
        entry[1] = detail


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for ac in sorted(_criteria, key=lambda s: int(s.split("-")[1])):
        ok, detail = _criteria[ac]
        terminalreporter.write_line(f"{ac} {'PASS' if ok else 'FAIL'}  {detail}")
