import pytest

from roacert import dynamics as dyn


@pytest.fixture(scope="session")
def vdp():
    return dyn.load_builtin("vanderpol_reverse")


@pytest.fixture(scope="session")
def quartic():
    return dyn.load_builtin("quartic_interaction")
