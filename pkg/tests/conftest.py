import pytest
from hypothesis import settings

from tunneldecay.config import bundled_config
from tunneldecay.runner import run_scenario

settings.register_profile("default", deadline=None)
settings.load_profile("default")

_CACHE = {}


def scenario(name):
    """Cached pipeline result for a bundled scenario."""
    if name not in _CACHE:
        _CACHE[name] = run_scenario(bundled_config(name))
    return _CACHE[name]


@pytest.fixture(scope="session")
def row5():
    return scenario("table1_row5")


@pytest.fixture(scope="session")
def row7():
    return scenario("table1_row7")
