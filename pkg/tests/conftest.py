"""Shared fixtures: the benchmark scenario and its designed regulators.

Everything here is deterministic, so session scope is safe — every test
sees the identical gains and the expensive syntheses run once.
"""

import numpy as np
import pytest

import regulata as rg


@pytest.fixture(scope="session")
def pendulum():
    return rg.build_pendulum()


@pytest.fixture(scope="session")
def hold_design(pendulum):
    return rg.build_hold_regulator(pendulum)


@pytest.fixture(scope="session")
def emulation_design(pendulum):
    return rg.build_emulation_regulator(pendulum)


@pytest.fixture(scope="session")
def multirate_design(pendulum):
    """(MultiRateRegulator, RateEstimate) at the benchmark rate N=4."""
    return rg.build_multirate_regulator(pendulum.with_method("multirate", N=4))


@pytest.fixture(scope="session")
def constant_load():
    return rg.build_constant_load()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def scalar_test_plant():
    """dx = -x + u + w with constant disturbance (S = 0) and e = x."""
    return rg.PlantModel(
        A=np.array([[-1.0]]), B=np.array([[1.0]]), P=np.array([[1.0]]),
        S=np.zeros((1, 1)),
        C_e=np.array([[1.0]]), Q_e=np.zeros((1, 1)),
        C_m=np.zeros((0, 1)), Q_m=np.zeros((0, 1)),
    )
