"""Shared fixtures and small independent helpers for the test suite."""

import numpy as np
import pytest

from articrig.bike import make_toy_bike
from articrig.body import default_skeleton


def random_rotation(rng):
    """Haar-uniform rotation from a QR decomposition (independent of the package)."""
    Q, R = np.linalg.qr(rng.normal(size=(3, 3)))
    Q = Q @ np.diag(np.sign(np.diag(R)))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def random_unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def homogeneous(R, t):
    M = np.eye(4)
    M[:3, :3] = R
    M[:3, 3] = t
    return M


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy_bike():
    return make_toy_bike(seed=0, density=100, sh_degree=3)


@pytest.fixture(scope="session")
def skeleton():
    return default_skeleton()
