import pytest

ACCEPTANCE = {}


@pytest.fixture
def verdict(request):
    """Record an acceptance criterion's outcome; also fails the test if it did not hold."""

    def record(name, ok, detail=""):
        line = "%s %s %s" % (name, "PASS" if ok else "FAIL", detail)
        ACCEPTANCE[name] = line.rstrip()
        print(line)
        assert ok, line

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    name = item.get_closest_marker("criterion")
    if name and rep.when == "call" and rep.failed and name.args[0] not in ACCEPTANCE:
        ACCEPTANCE[name.args[0]] = "%s FAIL (error before verdict)" % name.args[0]


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion covered by the test")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for name in sorted(ACCEPTANCE, key=lambda n: int(n[2:])):
            terminalreporter.write_line(ACCEPTANCE[name])
