import pytest

from cftmps.algebra import heisenberg, su2
from cftmps.mps import Workspace


@pytest.fixture(scope="session")
def heis():
    return heisenberg()


@pytest.fixture(scope="session")
def su2_1():
    return su2(1)


@pytest.fixture(scope="session")
def su2_2():
    return su2(2)


@pytest.fixture(scope="session")
def workspace():
    # shared across the session; modules and fields are cached by key
    return Workspace()
