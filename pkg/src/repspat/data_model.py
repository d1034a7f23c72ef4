"""Core data types, validation and file persistence."""

from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (
    BinaryViolation,
    EmptyDataset,
    InvalidParameter,
    IoFailure,
    MissingFile,
    NonFiniteValue,
    NonNumericCell,
    ShapeMismatch,
    UnknownCluster,
    UnresolvableColumns,
)


class AttrKind(str, enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpatialDataset:
    """Point locations with an attribute row per location.

    ``true_labels`` is carried for evaluation only; nothing in the
    clustering or testing pipeline reads it.
    """

    coords: np.ndarray
    attrs: np.ndarray
    attr_kind: AttrKind = AttrKind.CONTINUOUS
    true_labels: np.ndarray | None = None
    attr_names: tuple[str, ...] | None = None

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float)
        attrs = np.array(self.attrs, dtype=float)
        if attrs.ndim == 1:
            attrs = attrs[:, None]
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ShapeMismatch(f"coords must be n x 2, got shape {coords.shape}")
        if attrs.ndim != 2:
            raise ShapeMismatch(f"attrs must be n x p, got shape {attrs.shape}")
        if coords.shape[0] == 0:
            raise EmptyDataset("dataset has no rows")
        if coords.shape[0] != attrs.shape[0]:
            raise ShapeMismatch(
                f"coords has {coords.shape[0]} rows but attrs has {attrs.shape[0]}"
            )
        if attrs.shape[1] < 1:
            raise ShapeMismatch("at least one attribute column is required")
        if not np.all(np.isfinite(coords)) or not np.all(np.isfinite(attrs)):
            raise NonFiniteValue("coordinates and attributes must be finite")
        kind = AttrKind(self.attr_kind)
        if kind is AttrKind.BINARY and not np.all((attrs == 0) | (attrs == 1)):
            bad = attrs[(attrs != 0) & (attrs != 1)][0]
            raise BinaryViolation(f"binary attributes must be 0 or 1, found {bad!r}")
        labels = self.true_labels
        if labels is not None:
            labels = np.asarray(labels)
            if labels.shape != (coords.shape[0],):
                raise ShapeMismatch("true_labels must have one entry per row")
            labels = _frozen(labels.copy())
        names = self.attr_names
        if names is not None:
            names = tuple(str(s) for s in names)
            if len(names) != attrs.shape[1]:
                raise ShapeMismatch("attr_names length must equal the attribute count")
        object.__setattr__(self, "coords", _frozen(coords))
        object.__setattr__(self, "attrs", _frozen(attrs))
        object.__setattr__(self, "attr_kind", kind)
        object.__setattr__(self, "true_labels", labels)
        object.__setattr__(self, "attr_names", names)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def p(self) -> int:
        return self.attrs.shape[1]


@dataclass(frozen=True, eq=False)
class Partition:
    """Flat cluster labelling with dense identifiers ``1..G``."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.size == 0:
            raise ShapeMismatch("partition labels must be a non-empty 1-d sequence")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(np.equal(np.mod(labels, 1), 0)):
                raise InvalidParameter("partition labels must be integers")
        labels = labels.astype(np.int64)
        present = np.unique(labels)
        g = int(present.size)
        if present[0] != 1 or present[-1] != g:
            raise InvalidParameter(
                "partition labels must be dense 1..G with every id present"
            )
        object.__setattr__(self, "labels", _frozen(labels))

    @property
    def G(self) -> int:
        return int(self.labels.max())

    @property
    def n(self) -> int:
        return self.labels.size

    def members(self, g: int) -> np.ndarray:
        if not 1 <= g <= self.G:
            raise UnknownCluster(f"cluster id {g} not in 1..{self.G}")
        return np.flatnonzero(self.labels == g)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.G + 1)[1:]

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)

    def __hash__(self):
        return hash(self.labels.tobytes())

    @classmethod
    def from_groups(cls, raw) -> "Partition":
        """Densify arbitrary group ids, numbering groups by smallest member index."""
        return cls(densify(raw))


def densify(raw) -> np.ndarray:
    raw = np.asarray(raw)
    _, first, inverse = np.unique(raw, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return rank[inverse.ravel()] + 1


@dataclass(frozen=True)
class PairTestResult:
    g: int
    h: int
    mmd2: float
    n_perm: int
    p_value: float
    p_adjusted: float
    reject: bool
    null: np.ndarray | None = field(default=None, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {
            "g": int(self.g),
            "h": int(self.h),
            "mmd2": float(self.mmd2),
            "n_perm": int(self.n_perm),
            "p_value": float(self.p_value),
            "p_adjusted": float(self.p_adjusted),
            "reject": bool(self.reject),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PairTestResult":
        return cls(
            g=int(d["g"]),
            h=int(d["h"]),
            mmd2=float(d["mmd2"]),
            n_perm=int(d["n_perm"]),
            p_value=float(d["p_value"]),
            p_adjusted=float(d["p_adjusted"]),
            reject=bool(d["reject"]),
        )


def check_distance_matrix(d: np.ndarray, *, bounded: bool = False) -> np.ndarray:
    """Validate a dense dissimilarity matrix and return it as a float array."""
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ShapeMismatch(f"distance matrix must be square, got {d.shape}")
    if not np.all(np.isfinite(d)):
        raise NonFiniteValue("distance matrix has non-finite entries")
    if np.any(d < 0):
        raise InvalidParameter("distance matrix has negative entries")
    if np.any(np.diag(d) != 0):
        raise InvalidParameter("distance matrix diagonal must be zero")
    if not np.array_equal(d, d.T):
        raise InvalidParameter("distance matrix must be symmetric")
    if bounded and np.any(d > 1):
        raise InvalidParameter("bounded dissimilarities must lie in [0, 1]")
    return d


def load_dataset(
    path: str | os.PathLike,
    schema: Mapping[str, object] | None = None,
    attr_kind: AttrKind | str = AttrKind.CONTINUOUS,
    *,
    sep: str = ",",
    standardize: bool = False,
) -> SpatialDataset:
    """Read a delimited text file with a header row.

    ``schema`` maps the roles ``x``, ``y``, ``attrs`` (list of names) and
    ``label`` to column names. Missing roles default to columns ``x``,
    ``y``, ``label`` and every remaining column as an attribute.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such file: {path}")
    schema = dict(schema or {})
    try:
        frame = pd.read_csv(path, sep=sep, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise EmptyDataset(f"{path} is empty") from None
    except (UnicodeDecodeError, pd.errors.ParserError) as exc:
        raise NonNumericCell(f"cannot parse {path}: {exc}") from None
    frame.columns = [c.strip() for c in frame.columns]

    xcol = str(schema.get("x", "x"))
    ycol = str(schema.get("y", "y"))
    label_col = schema.get("label", "label")
    attr_cols = schema.get("attrs")
    if attr_cols is None:
        attr_cols = [c for c in frame.columns if c not in (xcol, ycol, label_col)]
    attr_cols = [str(c) for c in attr_cols]
    missing = [c for c in (xcol, ycol, *attr_cols) if c not in frame.columns]
    if missing:
        raise UnresolvableColumns(f"columns not found in {path.name}: {missing}")
    if not attr_cols:
        raise UnresolvableColumns("no attribute columns resolved")
    if len(frame) == 0:
        raise EmptyDataset(f"{path} has a header but no rows")

    def numeric(cols):
        block = frame[cols]
        out = block.apply(pd.to_numeric, errors="coerce")
        bad = out.isna()
        if bad.any().any():
            r, c = np.argwhere(bad.to_numpy())[0]
            raise NonNumericCell(
                f"non-numeric cell {block.iat[r, c]!r} in column {cols[c]!r}, row {r + 2}"
            )
        return out.to_numpy(dtype=float)

    coords = numeric([xcol, ycol])
    attrs = numeric(attr_cols)
    kind = AttrKind(attr_kind)
    if standardize and kind is AttrKind.CONTINUOUS:
        sd = attrs.std(axis=0)
        attrs = (attrs - attrs.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    labels = None
    if label_col is not None and label_col in frame.columns:
        labels = frame[label_col].to_numpy()
    return SpatialDataset(coords, attrs, kind, labels, tuple(attr_cols))


def write_dataset(dataset: SpatialDataset, path: str | os.PathLike, *, sep: str = ",") -> None:
    names = dataset.attr_names or tuple(f"a{j + 1}" for j in range(dataset.p))
    frame = pd.DataFrame(dataset.attrs, columns=list(names))
    frame.insert(0, "y", dataset.coords[:, 1])
    frame.insert(0, "x", dataset.coords[:, 0])
    if dataset.true_labels is not None:
        frame["label"] = dataset.true_labels
    try:
        frame.to_csv(path, sep=sep, index=False, float_format="%.17g")
    except OSError as exc:
        raise IoFailure(str(exc)) from None


def save_partition(
    partition: Partition,
    test_results: Sequence[PairTestResult] | None,
    path: str | os.PathLike,
) -> None:
    doc = {
        "labels": partition.labels.tolist(),
        "g": partition.G,
        "tests": [t.to_dict() for t in test_results] if test_results is not None else [],
    }
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from None


def load_partition(path: str | os.PathLike) -> tuple[Partition, list[PairTestResult]]:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such file: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        partition = Partition(np.asarray(doc["labels"], dtype=np.int64))
        tests = [PairTestResult.from_dict(t) for t in doc.get("tests", [])]
        g = int(doc["g"])
    except (KeyError, TypeError, ValueError) as exc:
        raise NonNumericCell(f"malformed partition file {path}: {exc!r}") from None
    if g != partition.G:
        raise ShapeMismatch(f"g={g} disagrees with labels (G={partition.G})")
    return partition, tests

