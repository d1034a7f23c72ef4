"""Attribute dissimilarities: Euclidean for continuous rows, Jaccard for binary rows."""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InvalidParameter, ShapeMismatch

METRICS = ("euclidean", "jaccard", "cityblock")
DENSE_CAP = 20_000


def _rows(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ShapeMismatch("attribute rows must form a 2-d array")
    return a


def _jaccard_block(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    inter = a @ b.T
    union = a.sum(axis=1)[:, None] + b.sum(axis=1)[None, :] - inter
    out = np.zeros_like(inter)
    nz = union > 0
    out[nz] = 1.0 - inter[nz] / union[nz]
    return np.clip(out, 0.0, 1.0)


def pairwise_cross_distances(a, b, metric: str = "euclidean") -> np.ndarray:
    """Rectangular block ``out[i, j] = metric(a[i], b[j])``."""
    a, b = _rows(a), _rows(b)
    if a.shape[1] != b.shape[1]:
        raise ShapeMismatch(f"column mismatch: {a.shape[1]} vs {b.shape[1]}")
    if metric == "euclidean":
        return cdist(a, b, "euclidean")
    if metric == "cityblock":
        return cdist(a, b, "cityblock")
    if metric == "jaccard":
        return _jaccard_block(a, b)
    raise InvalidParameter(f"unknown metric {metric!r}; expected one of {METRICS}")


def _square(attrs, metric: str, cap: int) -> np.ndarray:
    x = _rows(attrs)
    if x.shape[0] > cap:
        raise InvalidParameter(
            f"{x.shape[0]} rows exceeds the dense distance cap of {cap}"
        )
    d = pairwise_cross_distances(x, x, metric)
    # exact symmetry and zero diagonal regardless of rounding in the kernel
    d = np.triu(d, 1)
    return d + d.T


def euclidean_matrix(attrs, *, cap: int = DENSE_CAP) -> np.ndarray:
    return _square(attrs, "euclidean", cap)


def jaccard_matrix(attrs, *, cap: int = DENSE_CAP) -> np.ndarray:
    """Jaccard dissimilarity; a pair of all-zero rows is at distance 0."""
    return _square(attrs, "jaccard", cap)


def distance_matrix(attrs, metric: str = "euclidean", *, cap: int = DENSE_CAP) -> np.ndarray:
    if metric not in METRICS:
        raise InvalidParameter(f"unknown metric {metric!r}")
    return _square(attrs, metric, cap)
