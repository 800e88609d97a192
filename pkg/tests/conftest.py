import numpy as np
import pytest
from hypothesis import settings

from instab.model import satellite, scalar, table1_setting

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def setting():
    cache = {}

    def get(k):
        if k not in cache:
            cache[k] = table1_setting(k)
        return cache[k]

    return get


@pytest.fixture
def prop2():
    return scalar(1.5, 1.0, 0.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def sat1():
    return satellite(1.0)
