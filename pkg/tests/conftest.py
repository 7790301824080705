import math

import pytest
from hypothesis import HealthCheck, settings

from thermo1d import make_builtin, make_intermittent

settings.register_profile("thermo1d", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("thermo1d")

LOG2 = math.log(2.0)

ACCEPTANCE_LINES = pytest.StashKey[list]()
PROPERTY_OUTCOMES = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def doubling():
    return make_builtin("doubling")


@pytest.fixture(scope="session")
def tent():
    return make_builtin("tent")


@pytest.fixture(scope="session")
def logistic():
    return make_builtin("logistic")


@pytest.fixture(scope="session")
def chebyshev():
    return make_builtin("chebyshev-like")


@pytest.fixture(scope="session")
def intermittent():
    return make_intermittent(0.5)


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []
    config.stash[PROPERTY_OUTCOMES] = {}


def pytest_collection_modifyitems(config, items):
    # acceptance criteria run last so the property-suite criterion sees every outcome
    items.sort(key=lambda it: it.path.name == "test_acceptance.py")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if item.get_closest_marker("property") is not None and (rep.when == "call" or rep.failed):
        outcomes = item.config.stash[PROPERTY_OUTCOMES]
        if rep.failed:
            outcomes[item.nodeid] = "failed"
        elif hasattr(rep, "wasxfail"):
            outcomes[item.nodeid] = "xfailed"
        else:
            outcomes.setdefault(item.nodeid, "passed")


@pytest.fixture
def acceptance_log(request):
    return request.config.stash[ACCEPTANCE_LINES]


@pytest.fixture
def property_outcomes(request):
    return request.config.stash[PROPERTY_OUTCOMES]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
