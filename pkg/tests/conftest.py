import numpy as np
import pytest

from scalereg.harness import _blob_2d, _bumpy_ellipsoid
from scalereg.registration.core import PointSet
from scalereg.registration.utils import rotation_2d


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def blob():
    return PointSet(_blob_2d(200))


@pytest.fixture
def ellipsoid():
    return PointSet(_bumpy_ellipsoid(300))


def rot(theta: float) -> np.ndarray:
    return rotation_2d(theta)


def centered(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    pts = rng.normal(size=(n, dim))
    return pts - pts.mean(axis=0)
