import os

import pytest

from gasket_hydro import gasket


def jobs() -> int:
    return max(1, min(8, os.cpu_count() or 1))


@pytest.fixture(scope="session")
def g0():
    return gasket.build_cached(0)


@pytest.fixture(scope="session")
def g1():
    return gasket.build_cached(1)


@pytest.fixture(scope="session")
def g2():
    return gasket.build_cached(2)


@pytest.fixture(scope="session")
def g3():
    return gasket.build_cached(3)


@pytest.fixture(scope="session")
def g4():
    return gasket.build_cached(4)
