import numpy as np
import pytest

from annealpf import Schedule, sat3_instance, sk_instance


@pytest.fixture
def sk4():
    return sk_instance(4, seed=7)


@pytest.fixture
def sk5():
    return sk_instance(5, seed=11)


@pytest.fixture
def sat5():
    return sat3_instance(5, seed=3)


@pytest.fixture
def short_schedule():
    return Schedule(tau=2.0, dt=0.01)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
