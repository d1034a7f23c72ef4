"""Similarity graph over clusters and the final relabelling."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .data_model import Partition, PairTestResult, densify
from .errors import InvalidParameter, MissingPair, ShapeMismatch


class Mode(str, enum.Enum):
    COMPONENTS = "components"
    CLIQUES = "cliques"


@dataclass(frozen=True, eq=False)
class SimilarityGraph:
    """Clusters ``1..G``; an edge joins each pair whose test did not reject.

    ``weight`` holds the observed MMD^2 on edges and NaN elsewhere.
    """

    G: int
    weight: np.ndarray

    @property
    def adjacency(self) -> np.ndarray:
        return ~np.isnan(self.weight)

    def edges(self) -> list[tuple[int, int, float]]:
        out = []
        for i in range(self.G):
            for j in range(i + 1, self.G):
                if not np.isnan(self.weight[i, j]):
                    out.append((i + 1, j + 1, float(self.weight[i, j])))
        return out

    def neighbors(self, g: int) -> set[int]:
        return {int(j) + 1 for j in np.flatnonzero(self.adjacency[g - 1])}

    def to_dot(self, name: str = "similarity") -> str:
        lines = [f"graph {name} {{"]
        lines += [f"  {g};" for g in range(1, self.G + 1)]
        lines += [f'  {g} -- {h} [label="{w:.4g}"];' for g, h, w in self.edges()]
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_similarity_graph(results, G: int) -> SimilarityGraph:
    G = int(G)
    w = np.full((G, G), np.nan)
    seen = np.zeros((G, G), dtype=bool)
    for r in results:
        r = r if isinstance(r, PairTestResult) else PairTestResult.from_dict(r)
        g, h = sorted((r.g, r.h))
        if not (1 <= g < h <= G):
            raise InvalidParameter(f"pair ({r.g}, {r.h}) is outside 1..{G}")
        seen[g - 1, h - 1] = True
        if not r.reject:
            w[g - 1, h - 1] = w[h - 1, g - 1] = max(float(r.mmd2), 0.0)
    missing = [(g + 1, h + 1) for g in range(G) for h in range(g + 1, G) if not seen[g, h]]
    if missing:
        raise MissingPair(f"no test result for pairs {missing[:5]}")
    return SimilarityGraph(G, w)


def maximal_cliques(adj: np.ndarray) -> list[tuple[int, ...]]:
    """Bron-Kerbosch with pivoting; 0-based node ids, each clique sorted."""
    n = adj.shape[0]
    nbr = [set(np.flatnonzero(adj[v]).tolist()) - {v} for v in range(n)]
    out = []

    def expand(r, p, x):
        if not p and not x:
            out.append(tuple(sorted(r)))
            return
        pivot = max(p | x, key=lambda u: (len(nbr[u] & p), -u))
        for v in sorted(p - nbr[pivot]):
            expand(r | {v}, p & nbr[v], x & nbr[v])
            p = p - {v}
            x = x | {v}

    expand(set(), set(range(n)), set())
    return sorted(out)


def _component_groups(graph: SimilarityGraph) -> np.ndarray:
    _, comp = connected_components(csr_matrix(graph.adjacency.astype(np.int8)), directed=False)
    return comp


def _clique_groups(graph: SimilarityGraph) -> np.ndarray:
    w = graph.weight
    cliques = [c for c in maximal_cliques(graph.adjacency) if len(c) >= 2]
    group = np.arange(graph.G) + len(cliques)
    for v in range(graph.G):
        best = None
        for ci, c in enumerate(cliques):
            if v not in c:
                continue
            cost = sum(w[v, u] for u in c if u != v)
            key = (cost, c)
            if best is None or key < best[0]:
                best = (key, ci)
        if best is not None:
            group[v] = best[1]
    return group


def reassign_labels(graph: SimilarityGraph, partition: Partition, mode="components") -> Partition:
    """Merge input clusters that the similarity graph joins.

    In clique mode a node lying in several maximal cliques joins the one
    with the smallest total edge weight from that node; ties go to the
    clique with the smaller sorted node ids.
    """
    mode = Mode(mode)
    if graph.G != partition.G:
        raise ShapeMismatch(f"graph has {graph.G} nodes but partition has {partition.G} clusters")
    group = _component_groups(graph) if mode is Mode.COMPONENTS else _clique_groups(graph)
    return Partition(densify(group[partition.labels - 1]))
