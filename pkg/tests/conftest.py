import numpy as np
import pytest

from ergokit import PerturbationFamily, SmoothCircleMap, TrigPoly, keller_map
from ergokit.trig import default_direction


@pytest.fixture(scope="session")
def doubling():
    return SmoothCircleMap(2)


@pytest.fixture(scope="session")
def degree3():
    return SmoothCircleMap(3)


@pytest.fixture(scope="session")
def degree4_map():
    # 4x + 0.01 sin(8 pi x) mod 1
    return SmoothCircleMap(4, TrigPoly(0.0, ((4, 0.01),), ()))


@pytest.fixture(scope="session")
def keller_ref():
    return keller_map(1.0, 0.5, 0.24)


@pytest.fixture(scope="session")
def doubling_family(doubling):
    return PerturbationFamily(doubling, default_direction())


def sawtooth(y):
    return np.mod(np.asarray(y, dtype=float), 1.0) - 0.5
