import numpy as np
import pytest

from repspat.data_model import AttrKind, SpatialDataset


def lattice(nx, ny, h=1.0):
    gx, gy = np.meshgrid(np.arange(nx) * h, np.arange(ny) * h)
    return np.column_stack((gx.ravel(), gy.ravel())).astype(float)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_blobs():
    """Two side-by-side 5x5 patches with a mean gap of 6."""
    r = np.random.default_rng(7)
    left = lattice(5, 5)
    right = lattice(5, 5) + [5.0, 0.0]
    coords = np.vstack((left, right))
    attrs = np.vstack((r.normal(0, 1, (25, 3)), r.normal(6, 1, (25, 3))))
    return SpatialDataset(coords, attrs, true_labels=np.repeat([1, 2], 25))


@pytest.fixture
def binary_markers():
    """Three strips on a 12x12 lattice; strips 1 and 3 share a marker profile."""
    r = np.random.default_rng(11)
    coords = lattice(12, 12)
    strip = np.minimum(coords[:, 0] // 4, 2).astype(int)
    profile = np.array([[0.9, 0.9, 0.1, 0.1, 0.8], [0.1, 0.1, 0.9, 0.9, 0.2], [0.9, 0.9, 0.1, 0.1, 0.8]])
    attrs = (r.random((coords.shape[0], 5)) < profile[strip]).astype(float)
    truth = np.array([1, 2, 1])[strip]
    return SpatialDataset(coords, attrs, AttrKind.BINARY, truth, tuple(f"m{j}" for j in range(5)))
