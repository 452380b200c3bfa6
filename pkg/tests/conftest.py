import math

import numpy as np
import pytest

from nopa_cascade.cli import shipped_config_text
from nopa_cascade.config import parse_config
from nopa_cascade.nopa import CavityGeometry, derive_rates


@pytest.fixture(scope="session")
def nopa1_geometry():
    return CavityGeometry("linear", 0.051, 0.010, 0.032, 165)


@pytest.fixture(scope="session")
def nopa2_geometry():
    return CavityGeometry("ring", 0.557, 0.010, 0.035, 153)


@pytest.fixture(scope="session")
def nopa1_rates(nopa1_geometry):
    return derive_rates(nopa1_geometry)


@pytest.fixture(scope="session")
def nopa2_rates(nopa2_geometry):
    return derive_rates(nopa2_geometry)


def shipped(name):
    return parse_config(shipped_config_text(name), source=name)


@pytest.fixture(scope="session")
def fig2_cfg():
    return shipped("fig2")


@pytest.fixture(scope="session")
def fig3_cfg():
    return shipped("fig3")


@pytest.fixture(scope="session")
def nopa1_cfg():
    return shipped("nopa1")


def random_psd(rng, scale=3.0):
    """Random complex Hermitian positive-definite 4x4 matrix."""
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    return scale * (a @ a.conj().T) / 4 + 0.05 * np.eye(4)


def db(x):
    return 10 * math.log10(x)
