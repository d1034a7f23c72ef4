import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repspat.data_model import Partition
from repspat.errors import InvalidParameter, IsolatedNode
from repspat.spatial_graph import (
    build_knn_links,
    cluster_adjacency,
    clusters_linked,
    links_from_edges,
    row_standardize,
)


def brute_knn(coords, m):
    """All-pairs m-NN with ties to the smaller index, then union symmetrisation."""
    n = len(coords)
    adj = [set() for _ in range(n)]
    for i in range(n):
        d = [((coords[i] - coords[j]) @ (coords[i] - coords[j]), j) for j in range(n) if j != i]
        for _, j in sorted(d)[:m]:
            adj[i].add(j)
            adj[j].add(i)
    return [sorted(s) for s in adj]


def test_collinear_m1():
    g = build_knn_links(np.array([[0.0, 0], [1, 0], [2, 0]]), 1)
    assert g.edges().tolist() == [[0, 1], [1, 2]]


def test_unit_square_m2():
    g = build_knn_links(np.array([[0.0, 0], [1, 0], [1, 1], [0, 1]]), 2)
    assert [nb.tolist() for nb in g.neighbors] == [[1, 3], [0, 2], [1, 3], [0, 2]]


def test_random_points_match_brute_force(rng):
    coords = rng.uniform(0, 10, (100, 2))
    g = build_knn_links(coords, 8)
    assert g.degree().min() >= 8
    assert [nb.tolist() for nb in g.neighbors] == brute_knn(coords, 8)


def test_lattice_ties_follow_index():
    gx, gy = np.meshgrid(np.arange(5.0), np.arange(5.0))
    coords = np.column_stack((gx.ravel(), gy.ravel()))
    g = build_knn_links(coords, 3)
    assert [nb.tolist() for nb in g.neighbors] == brute_knn(coords, 3)


def test_m_out_of_range():
    with pytest.raises(InvalidParameter):
        build_knn_links(np.zeros((3, 2)), 3)
    with pytest.raises(InvalidParameter):
        build_knn_links(np.zeros((3, 2)), 0)


def test_row_standardize_path():
    w = row_standardize(links_from_edges(3, [(0, 1), (1, 2)]))
    assert w[1].tolist() == [0.5, 0.0, 0.5]
    assert w[0].tolist() == [0.0, 1.0, 0.0]


def test_row_sums_large(rng):
    w = row_standardize(build_knn_links(rng.uniform(0, 40, (2500, 2)), 8), dense=False)
    assert np.abs(np.asarray(w.sum(axis=1)).ravel() - 1).max() < 1e-12


def test_cycle_spectral_radius():
    w = row_standardize(links_from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)]))
    assert np.isclose(np.abs(np.linalg.eigvals(w)).max(), 1.0)


def test_isolated_node():
    with pytest.raises(IsolatedNode):
        row_standardize(links_from_edges(3, [(0, 1)]))


def test_clusters_linked_cases(rng):
    g = links_from_edges(2, [(0, 1)])
    assert clusters_linked(g, Partition(np.array([1, 2])), 1, 2)
    g = links_from_edges(4, [(0, 1), (2, 3)])
    assert not clusters_linked(g, Partition(np.array([1, 1, 2, 2])), 1, 2)


def test_clusters_linked_matches_edge_scan(rng):
    n = 40
    edges = rng.integers(0, n, (60, 2))
    g = links_from_edges(n, edges)
    part = Partition.from_groups(rng.integers(0, 5, n))
    adj = cluster_adjacency(g, part.labels, part.G)
    for a in range(1, part.G + 1):
        for b in range(a + 1, part.G + 1):
            scan = any(
                {part.labels[i], part.labels[j]} == {a, b} for i, j in g.edges()
            )
            assert clusters_linked(g, part, a, b) == scan == adj[a - 1, b - 1]


def test_edge_list_dump(tmp_path):
    g = build_knn_links(np.array([[0.0, 0], [1, 0], [2, 0]]), 1)
    g.write_edge_list(tmp_path / "e.txt")
    assert (tmp_path / "e.txt").read_text().split() == ["0", "1", "1", "2"]


coords_st = st.integers(3, 40).flatmap(
    lambda n: st.tuples(st.just(n), st.integers(0, 10_000), st.integers(1, n - 1))
)


@settings(max_examples=40, deadline=None)
@given(coords_st, st.booleans())
def test_symmetry_degree_and_radius(case, on_grid):
    n, seed, m = case
    r = np.random.default_rng(seed)
    coords = r.integers(0, 6, (n, 2)).astype(float) if on_grid else r.random((n, 2))
    g = build_knn_links(coords, m)
    a = g.to_sparse().toarray()
    assert np.array_equal(a, a.T)
    assert np.all(np.diag(a) == 0)
    assert g.degree().min() >= m
    w = row_standardize(g)
    assert np.abs(np.linalg.eigvals(w)).max() <= 1 + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(5, 40), st.integers(0, 10_000))
def test_permutation_equivariance(n, seed):
    r = np.random.default_rng(seed)
    coords = r.random((n, 2))
    m = int(r.integers(1, n))
    perm = r.permutation(n)
    g = build_knn_links(coords, m)
    gp = build_knn_links(coords[perm], m)
    for new_i, old_i in enumerate(perm):
        assert sorted(perm[gp.neighbors[new_i]].tolist()) == g.neighbors[old_i].tolist()
