import pytest

# acceptance outcomes keyed by criterion number: (title, passed, notes)
_ACCEPTANCE: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(n, title): acceptance criterion number n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    entry = _ACCEPTANCE.setdefault(n, [title, True, []])
    if rep.when == "call" or rep.failed:
        if rep.failed:
            entry[1] = False
        elif rep.skipped:
            entry[1] = None


@pytest.fixture
def acceptance_note(request):
    """Attach measured values to the acceptance summary line."""
    mark = request.node.get_closest_marker("criterion")

    def note(text):
        if mark is not None:
            n, title = mark.args
            _ACCEPTANCE.setdefault(n, [title, True, []])[2].append(str(text))
    return note


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, ok, notes = _ACCEPTANCE[n]
        word = {True: "PASS", False: "FAIL", None: "SKIP"}[ok]
        tr.write_line(f"criterion {n:>2}: {word}  {title}")
        for line in notes:
            for sub in line.splitlines():
                tr.write_line(f"      {sub}")
