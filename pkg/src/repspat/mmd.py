"""Kernels and MMD^2 estimators between two attribute samples."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _backend
from .dissimilarity import pairwise_cross_distances
from .errors import EmptyDataset, InternalInconsistency, InvalidParameter, ShapeMismatch

BLOCK = 1024
CLAMP_TOL = 1e-12


class KernelName(str, enum.Enum):
    IMQ = "imq"
    GAUSSIAN = "gaussian"
    LAPLACIAN = "laplacian"


class BaseDistance(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    JACCARD = "jaccard"


DEFAULT_PARAM = {KernelName.IMQ: 1.0, KernelName.GAUSSIAN: 2.0, KernelName.LAPLACIAN: 2.0}
_KERNEL_CODE = {
    KernelName.GAUSSIAN: _backend.GAUSSIAN,
    KernelName.LAPLACIAN: _backend.LAPLACIAN,
    KernelName.IMQ: _backend.IMQ,
}


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family, its parameter (sigma or c) and the base distance.

    The Laplacian kernel on continuous data uses the L1 distance.
    """

    name: KernelName = KernelName.IMQ
    param: float | None = None
    distance: BaseDistance = BaseDistance.EUCLIDEAN

    def __post_init__(self):
        try:
            name = KernelName(self.name)
            dist = BaseDistance(self.distance)
        except ValueError as exc:
            raise InvalidParameter(str(exc)) from None
        param = DEFAULT_PARAM[name] if self.param is None else float(self.param)
        if not (np.isfinite(param) and param > 0):
            raise InvalidParameter(f"kernel parameter must be positive, got {param}")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "param", param)
        object.__setattr__(self, "distance", dist)

    @property
    def metric(self) -> str:
        if self.distance is BaseDistance.JACCARD:
            return "jaccard"
        return "cityblock" if self.name is KernelName.LAPLACIAN else "euclidean"

    @property
    def metric_code(self) -> int:
        return {"jaccard": _backend.JACCARD, "cityblock": _backend.CITYBLOCK}.get(
            self.metric, _backend.EUCLIDEAN
        )

    @property
    def code(self) -> int:
        return _KERNEL_CODE[self.name]

    @property
    def at_zero(self) -> float:
        return 1.0 / self.param if self.name is KernelName.IMQ else 1.0

    def to_dict(self) -> dict:
        return {"name": self.name.value, "param": self.param, "distance": self.distance.value}

    @classmethod
    def from_dict(cls, d) -> "KernelSpec":
        return cls(d["name"], d.get("param"), d.get("distance", "euclidean"))


def kernel_eval(spec: KernelSpec, d):
    """Kernel value at distance ``d`` (scalar or array)."""
    d = np.asarray(d, dtype=float)
    s = spec.param
    if spec.name is KernelName.GAUSSIAN:
        out = np.exp(-(d * d) / (s * s))
    elif spec.name is KernelName.LAPLACIAN:
        out = np.exp(-d / s)
    else:
        out = 1.0 / np.sqrt(d * d + s * s)
    return float(out) if out.ndim == 0 else out


def gram(spec: KernelSpec, a, b=None) -> np.ndarray:
    a = _rows(a)
    b = a if b is None else _rows(b)
    return kernel_eval(spec, pairwise_cross_distances(a, b, spec.metric))


def _rows(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ShapeMismatch("samples must be 2-d arrays of rows")
    return x


def kernel_sum(spec: KernelSpec, a, b, *, block: int = BLOCK) -> float:
    """Sum of ``k(a_i, b_j)`` over all pairs, streamed in square tiles.

    Tile sums are collected in a fixed order and reduced once, so the result
    does not depend on scheduling.
    """
    a, b = _rows(a), _rows(b)
    parts = []
    for i in range(0, a.shape[0], block):
        for j in range(0, b.shape[0], block):
            parts.append(gram(spec, a[i : i + block], b[j : j + block]).sum())
    return float(np.sum(parts)) if parts else 0.0


class Estimator(str, enum.Enum):
    BIASED = "biased"
    UNBIASED = "unbiased"


@dataclass(frozen=True)
class MmdResult:
    value: float
    estimator: Estimator
    n_g: int
    n_h: int


def _canonical(xg, xh):
    # fixed argument order makes the estimate exactly symmetric
    xg, xh = _rows(xg), _rows(xh)
    if xg.shape[1] != xh.shape[1]:
        raise ShapeMismatch(f"samples have {xg.shape[1]} and {xh.shape[1]} columns")
    if (xh.shape[0], xh.tobytes()) < (xg.shape[0], xg.tobytes()):
        return xh, xg
    return xg, xh


def _sums(xg, xh, spec):
    return kernel_sum(spec, xg, xg), kernel_sum(spec, xh, xh), kernel_sum(spec, xg, xh)


def mmd2_biased(xg, xh, spec: KernelSpec | None = None) -> MmdResult:
    """V-statistic: diagonal self-similarities included."""
    spec = spec or KernelSpec()
    a, b = _canonical(xg, xh)
    ng, nh = a.shape[0], b.shape[0]
    if ng < 1 or nh < 1:
        raise EmptyDataset("both samples need at least one row")
    sgg, shh, sgh = _sums(a, b, spec)
    v = sgg / ng**2 + shh / nh**2 - 2.0 * sgh / (ng * nh)
    if v < 0:
        if v < -CLAMP_TOL:
            raise InternalInconsistency(f"biased MMD^2 is negative ({v:.3e})")
        v = 0.0
    return MmdResult(float(v), Estimator.BIASED, len(_rows(xg)), len(_rows(xh)))


def mmd2_unbiased(xg, xh, spec: KernelSpec | None = None) -> MmdResult:
    """U-statistic: diagonal terms dropped from both within-sample sums."""
    spec = spec or KernelSpec()
    a, b = _canonical(xg, xh)
    ng, nh = a.shape[0], b.shape[0]
    if ng < 2 or nh < 2:
        raise EmptyDataset("the unbiased estimator needs at least two rows per sample")
    sgg, shh, sgh = _sums(a, b, spec)
    k0 = spec.at_zero
    v = (sgg - ng * k0) / (ng * (ng - 1)) + (shh - nh * k0) / (nh * (nh - 1)) - 2.0 * sgh / (ng * nh)
    return MmdResult(float(v), Estimator.UNBIASED, len(_rows(xg)), len(_rows(xh)))


def mmd2_from_sums(sxx: np.ndarray, syy: np.ndarray, sxy: np.ndarray, nx, ny) -> np.ndarray:
    """Biased MMD^2 from precomputed kernel sums (vectorised over replicates)."""
    return sxx / (nx * nx) + syy / (ny * ny) - 2.0 * sxy / (nx * ny)
