"""m-nearest-neighbour contiguity links and row-standardised weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .data_model import Partition
from .errors import InvalidParameter, IsolatedNode, NonFiniteValue, ShapeMismatch


@dataclass(frozen=True, eq=False)
class LinkGraph:
    """Undirected link structure; ``neighbors[i]`` is sorted and excludes ``i``."""

    n: int
    m: int
    neighbors: tuple[np.ndarray, ...]

    def degree(self) -> np.ndarray:
        return np.array([nb.size for nb in self.neighbors], dtype=np.int64)

    def edges(self) -> np.ndarray:
        """Edge list as an ``(E, 2)`` array with ``i < j``, sorted."""
        rows = [np.column_stack((np.full(nb.size, i), nb)) for i, nb in enumerate(self.neighbors)]
        e = np.concatenate(rows) if rows else np.empty((0, 2), dtype=np.int64)
        e = e[e[:, 0] < e[:, 1]]
        return e.astype(np.int64)

    def to_sparse(self) -> sparse.csr_matrix:
        indptr = np.concatenate(([0], np.cumsum(self.degree())))
        indices = np.concatenate(self.neighbors) if self.n else np.empty(0, np.int64)
        data = np.ones(indices.size, dtype=np.int8)
        return sparse.csr_matrix((data, indices, indptr), shape=(self.n, self.n))

    def __eq__(self, other):
        if not isinstance(other, LinkGraph) or other.n != self.n:
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.neighbors, other.neighbors))

    def write_edge_list(self, path) -> None:
        np.savetxt(path, self.edges(), fmt="%d")


def _sqdist(coords: np.ndarray, i: int, idx: np.ndarray) -> np.ndarray:
    diff = coords[idx] - coords[i]
    return diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1]


def knn_directed(coords: np.ndarray, m: int) -> np.ndarray:
    """Directed m-NN table (n x m), ties broken by the smaller point index.

    The k-d tree only proposes candidates; membership is decided on exactly
    recomputed squared distances so the result matches a brute-force scan.
    """
    n = coords.shape[0]
    tree = cKDTree(coords)
    k = min(n, m + 1)
    dist, _ = tree.query(coords, k=k)
    dist = dist.reshape(n, k)
    radius = dist[:, -1]
    out = np.empty((n, m), dtype=np.int64)
    for i in range(n):
        cand = tree.query_ball_point(coords[i], radius[i] * (1 + 1e-9) + 1e-12)
        cand = np.asarray(cand, dtype=np.int64)
        cand = cand[cand != i]
        d2 = _sqdist(coords, i, cand)
        order = np.lexsort((cand, d2))
        out[i] = cand[order[:m]]
    return out


def build_knn_links(coords, m: int) -> LinkGraph:
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ShapeMismatch("coords must be n x 2")
    if not np.all(np.isfinite(coords)):
        raise NonFiniteValue("coordinates must be finite")
    n = coords.shape[0]
    m = int(m)
    if m < 1 or m >= n:
        raise InvalidParameter(f"need 1 <= m < n, got m={m}, n={n}")
    nn = knn_directed(coords, m)
    rows = np.repeat(np.arange(n), m)
    cols = nn.ravel()
    a = sparse.coo_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(n, n)).tocsr()
    a = (a + a.T).tocsr()
    a.sort_indices()
    neighbors = tuple(
        a.indices[a.indptr[i] : a.indptr[i + 1]].astype(np.int64) for i in range(n)
    )
    return LinkGraph(n=n, m=m, neighbors=neighbors)


def links_from_edges(n: int, edges, m: int = 0) -> LinkGraph:
    """Build a LinkGraph from an explicit undirected edge list."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    edges = edges[edges[:, 0] != edges[:, 1]]
    adj = [set() for _ in range(n)]
    for i, j in edges:
        adj[i].add(int(j))
        adj[j].add(int(i))
    return LinkGraph(n=n, m=m, neighbors=tuple(np.array(sorted(s), dtype=np.int64) for s in adj))


def row_standardize(links: LinkGraph, *, dense: bool = True):
    """Row-standardised weights: ``w_ij = 1/deg(i)`` on links, else 0."""
    deg = links.degree()
    if np.any(deg == 0):
        raise IsolatedNode(f"node {int(np.argmin(deg))} has no links")
    a = links.to_sparse().astype(float)
    w = sparse.diags(1.0 / deg) @ a
    return w.toarray() if dense else w.tocsr()


def cluster_adjacency(links: LinkGraph, labels: np.ndarray, G: int) -> np.ndarray:
    """Boolean ``G x G`` matrix of clusters sharing at least one link (0-based)."""
    e = links.edges()
    lab = np.asarray(labels) - 1
    adj = np.zeros((G, G), dtype=bool)
    if e.size:
        a, b = lab[e[:, 0]], lab[e[:, 1]]
        adj[a, b] = True
        adj[b, a] = True
    np.fill_diagonal(adj, False)
    return adj


def clusters_linked(links: LinkGraph, partition: Partition, g: int, h: int) -> bool:
    if g == h:
        raise InvalidParameter("clusters_linked needs two distinct clusters")
    members = partition.members(g)
    partition.members(h)
    lab = partition.labels
    return any(np.any(lab[links.neighbors[i]] == h) for i in members)
