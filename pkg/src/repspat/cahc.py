"""Constrained agglomerative clustering, spatial silhouette and (m, G) selection.

Only cluster pairs joined by at least one spatial link may merge. Inter-cluster
dissimilarities follow the Lance-Williams recursion

    d(k, i+j) = a_i d(k, i) + a_j d(k, j) + b d(i, j) + c |d(k, i) - d(k, j)|

with the coefficients in :meth:`LinkageSpec.coefficients`.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .data_model import AttrKind, Partition, SpatialDataset, check_distance_matrix, densify
from .dissimilarity import distance_matrix
from .errors import EmptyDataset, InvalidParameter, ShapeMismatch
from .spatial_graph import LinkGraph, build_knn_links, cluster_adjacency


class Linkage(str, enum.Enum):
    SINGLE = "single"
    COMPLETE = "complete"
    AVERAGE = "average"
    WARD = "ward"


_METHOD_CODE = {
    Linkage.SINGLE: _backend.SINGLE,
    Linkage.COMPLETE: _backend.COMPLETE,
    Linkage.AVERAGE: _backend.AVERAGE,
    Linkage.WARD: _backend.WARD,
}


@dataclass(frozen=True)
class LinkageSpec:
    method: Linkage = Linkage.WARD

    def __post_init__(self):
        try:
            object.__setattr__(self, "method", Linkage(self.method))
        except ValueError:
            raise InvalidParameter(
                f"unknown linkage {self.method!r}; expected one of {[m.value for m in Linkage]}"
            ) from None

    def coefficients(self, ni: float, nj: float, nk: float) -> tuple[float, float, float, float]:
        """Lance-Williams ``(alpha_i, alpha_j, beta, gamma)`` for cluster sizes."""
        m = self.method
        if m is Linkage.SINGLE:
            return 0.5, 0.5, 0.0, -0.5
        if m is Linkage.COMPLETE:
            return 0.5, 0.5, 0.0, 0.5
        if m is Linkage.AVERAGE:
            return ni / (ni + nj), nj / (ni + nj), 0.0, 0.0
        t = ni + nj + nk
        return (ni + nk) / t, (nj + nk) / t, -nk / t, 0.0

    def update(self, dik: float, djk: float, dij: float, ni: float, nj: float, nk: float) -> float:
        """One Lance-Williams step, written out from the coefficient table."""
        ai, aj, b, g = self.coefficients(ni, nj, nk)
        return ai * dik + aj * djk + b * dij + g * abs(dik - djk)

    @property
    def squared(self) -> bool:
        # Ward recursion is exact on squared Euclidean input
        return self.method is Linkage.WARD


def as_linkage(linkage) -> LinkageSpec:
    return linkage if isinstance(linkage, LinkageSpec) else LinkageSpec(linkage)


@dataclass(frozen=True, eq=False)
class Dendrogram:
    """Merge history. Step ``k`` joins ``merges[k]`` into new id ``n + k``.

    For Ward the heights are ``sqrt(2 * increase in within-cluster SS)``,
    which is the scale used by scipy's ``ward``.
    """

    n: int
    merges: np.ndarray
    heights: np.ndarray
    sizes: np.ndarray
    linkage: LinkageSpec = field(default_factory=LinkageSpec)

    @property
    def n_components(self) -> int:
        """Active clusters left when no linked pair remains."""
        return self.n - self.merges.shape[0]

    def records(self) -> list[tuple[int, int, int, float]]:
        return [
            (int(a), int(b), self.n + k, float(h))
            for k, ((a, b), h) in enumerate(zip(self.merges, self.heights))
        ]

    def to_scipy(self) -> np.ndarray:
        """``(n-1) x 4`` linkage matrix; only defined for a complete tree."""
        if self.n_components != 1:
            raise InvalidParameter("linkage matrix needs a single final component")
        lo = np.minimum(self.merges[:, 0], self.merges[:, 1])
        hi = np.maximum(self.merges[:, 0], self.merges[:, 1])
        return np.column_stack((lo, hi, self.heights, self.sizes)).astype(float)


def cahc_fit(dist, links: LinkGraph, linkage="ward", *, backend: str | None = None) -> Dendrogram:
    """Agglomerate under the link constraint until no linked pair remains."""
    spec = as_linkage(linkage)
    d = check_distance_matrix(dist)
    n = d.shape[0]
    if n == 0:
        raise EmptyDataset("cannot cluster zero points")
    if links.n != n:
        raise ShapeMismatch(f"distance matrix has {n} rows but link graph has {links.n} nodes")
    work = np.array(d * d if spec.squared else d, dtype=np.float64, order="C")
    a = links.to_sparse()
    merges, heights, sizes = _backend.cahc_merge(
        work,
        a.indptr.astype(np.int64),
        a.indices.astype(np.int64),
        _METHOD_CODE[spec.method],
        backend=backend,
    )
    if spec.squared:
        heights = np.sqrt(np.maximum(heights, 0.0))
    return Dendrogram(n, merges, heights, sizes, spec)


def _roots(dendrogram: Dendrogram, steps: int) -> np.ndarray:
    n = dendrogram.n
    parent = np.arange(n + steps, dtype=np.int64)
    if steps:
        m = dendrogram.merges[:steps]
        new = n + np.arange(steps)
        parent[m[:, 0]] = new
        parent[m[:, 1]] = new
    while True:
        nxt = parent[parent]
        if np.array_equal(nxt, parent):
            return parent[:n]
        parent = nxt


def cut_partition(dendrogram: Dendrogram, G: int) -> Partition:
    """Replay merges until ``G`` clusters are active."""
    G = int(G)
    lo, hi = dendrogram.n_components, dendrogram.n
    if not lo <= G <= hi:
        raise InvalidParameter(f"G={G} outside the reachable range [{lo}, {hi}]")
    return Partition(densify(_roots(dendrogram, hi - G)))


@dataclass(frozen=True, eq=False)
class Silhouette:
    scores: np.ndarray
    mean: float


def spatial_silhouette(dist, links: LinkGraph, partition: Partition) -> Silhouette:
    """Silhouette whose separation term only looks at spatially linked clusters.

    Points in singleton clusters, or in clusters with no linked neighbour,
    score 0.
    """
    d = np.asarray(dist, dtype=float)
    G = partition.G
    if G < 2:
        raise InvalidParameter("silhouette needs at least two clusters")
    n = partition.n
    if d.shape != (n, n) or links.n != n:
        raise ShapeMismatch("distance matrix, links and partition disagree on n")
    lab = partition.labels - 1
    sizes = np.bincount(lab, minlength=G).astype(float)
    onehot = np.zeros((n, G))
    onehot[np.arange(n), lab] = 1.0
    sums = d @ onehot
    own = sums[np.arange(n), lab]
    own_size = sizes[lab]
    a = np.divide(own, own_size - 1, out=np.zeros(n), where=own_size > 1)
    mean_to = sums / sizes
    adj = cluster_adjacency(links, partition.labels, G)
    masked = np.where(adj[lab], mean_to, np.inf)
    b = masked.min(axis=1)
    ok = (own_size > 1) & np.isfinite(b)
    denom = np.maximum(a, b)
    s = np.zeros(n)
    good = ok & (denom > 0)
    s[good] = (b[good] - a[good]) / denom[good]
    return Silhouette(s, float(s.mean()))


@dataclass(frozen=True, eq=False)
class Selection:
    """Best ``(m, G)`` and the mean-silhouette surface (NaN where infeasible)."""

    m: int
    G: int
    score: float
    m_grid: tuple[int, ...]
    G_grid: tuple[int, ...]
    surface: np.ndarray

    def rows(self):
        for a, m in enumerate(self.m_grid):
            for b, g in enumerate(self.G_grid):
                yield m, g, float(self.surface[a, b])


def dataset_distances(dataset: SpatialDataset) -> np.ndarray:
    metric = "jaccard" if dataset.attr_kind is AttrKind.BINARY else "euclidean"
    return distance_matrix(dataset.attrs, metric)


def _score_m(m, coords, d, G_grid, spec, backend):
    links = build_knn_links(coords, m)
    dend = cahc_fit(d, links, spec, backend=backend)
    row = np.full(len(G_grid), np.nan)
    for b, g in enumerate(G_grid):
        if dend.n_components <= g <= dend.n and g >= 2:
            row[b] = spatial_silhouette(d, links, cut_partition(dend, g)).mean
    return row


def select_params(
    dataset: SpatialDataset,
    m_grid,
    G_grid,
    linkage="ward",
    *,
    dist: np.ndarray | None = None,
    threads: int = 1,
    backend: str | None = None,
) -> Selection:
    """Grid search over neighbourhood size and cluster count.

    One dendrogram per ``m``; every ``G`` is a cut of it. Ties go to the
    smaller ``G``, then the smaller ``m``.
    """
    m_grid = tuple(int(v) for v in m_grid)
    G_grid = tuple(int(v) for v in G_grid)
    if not m_grid or not G_grid:
        raise InvalidParameter("m and G grids must be nonempty")
    if max(G_grid) > dataset.n:
        raise InvalidParameter(f"max G {max(G_grid)} exceeds n={dataset.n}")
    spec = as_linkage(linkage)
    d = dataset_distances(dataset) if dist is None else check_distance_matrix(dist)

    def job(m):
        return _score_m(m, dataset.coords, d, G_grid, spec, backend)

    if threads > 1 and len(m_grid) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(job, m_grid))
    else:
        rows = [job(m) for m in m_grid]
    surface = np.vstack(rows)

    best = None
    for b in np.argsort(G_grid, kind="stable"):
        for a in np.argsort(m_grid, kind="stable"):
            v = surface[a, b]
            if np.isnan(v):
                continue
            if best is None or v > best[0]:
                best = (v, a, b)
    if best is None:
        raise InvalidParameter("no feasible (m, G) cell in the grid")
    v, a, b = best
    return Selection(m_grid[a], G_grid[b], float(v), m_grid, G_grid, surface)
