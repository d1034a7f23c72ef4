import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.cluster.hierarchy import linkage as scipy_linkage
from scipy.sparse.csgraph import connected_components

from repspat.cahc import (
    LinkageSpec,
    cahc_fit,
    cut_partition,
    select_params,
    spatial_silhouette,
)
from repspat.data_model import Partition, SpatialDataset
from repspat.dissimilarity import euclidean_matrix
from repspat.errors import InvalidParameter, ShapeMismatch
from repspat.spatial_graph import build_knn_links, cluster_adjacency, links_from_edges

LINKAGES = ["single", "complete", "average", "ward"]


def full_links(n):
    return links_from_edges(n, list(itertools.combinations(range(n), 2)), m=n - 1)


def ward_cost(x, a, b):
    """Twice the within-cluster SS increase from joining member sets a and b."""
    na, nb = len(a), len(b)
    diff = x[a].mean(axis=0) - x[b].mean(axis=0)
    return 2.0 * na * nb / (na + nb) * float(diff @ diff)


def definitional(method, x, d, a, b):
    block = d[np.ix_(a, b)]
    if method == "single":
        return block.min()
    if method == "complete":
        return block.max()
    if method == "average":
        return block.mean()
    return ward_cost(x, a, b)


def naive_agglomerate(x, method):
    """Recompute every inter-cluster value from raw members at each step."""
    n = len(x)
    d = euclidean_matrix(x)
    clusters = {i: [i] for i in range(n)}
    merges, heights = [], []
    nxt = n
    while len(clusters) > 1:
        best = None
        for a, b in itertools.combinations(sorted(clusters), 2):
            v = definitional(method, x, d, clusters[a], clusters[b])
            key = (v, a, b)
            if best is None or key < best:
                best = key
        v, a, b = best
        merges.append((a, b))
        heights.append(np.sqrt(v) if method == "ward" else v)
        clusters[nxt] = clusters.pop(a) + clusters.pop(b)
        nxt += 1
    return merges, np.array(heights)


def sorted_merges(dend):
    return [tuple(sorted(map(int, m))) for m in dend.merges]


@pytest.mark.parametrize("method", LINKAGES)
@pytest.mark.parametrize("seed", range(5))
def test_full_links_match_naive_oracle(method, seed):
    x = np.random.default_rng(seed).normal(size=(15, 3))
    dend = cahc_fit(euclidean_matrix(x), full_links(15), method)
    merges, heights = naive_agglomerate(x, method)
    assert sorted_merges(dend) == merges
    assert np.allclose(dend.heights, heights, rtol=0, atol=1e-10)


@pytest.mark.parametrize("method", LINKAGES)
def test_full_links_match_scipy(method, rng):
    x = rng.normal(size=(40, 4))
    dend = cahc_fit(euclidean_matrix(x), full_links(40), method)
    ref = scipy_linkage(x, method=method)
    assert np.allclose(np.sort(dend.heights), np.sort(ref[:, 2]), atol=1e-10)
    assert np.allclose(dend.to_scipy()[:, 2], ref[:, 2], atol=1e-10)


def test_ward_six_points_heights(rng):
    x = rng.normal(size=(6, 2))
    dend = cahc_fit(euclidean_matrix(x), full_links(6), "ward")
    _, heights = naive_agglomerate(x, "ward")
    assert np.allclose(dend.heights, heights, atol=1e-10)


def test_line_with_two_components():
    x = np.array([[0.0], [1.0], [10.0], [11.0]])
    links = links_from_edges(4, [(0, 1), (2, 3)], m=1)
    dend = cahc_fit(euclidean_matrix(x), links, "single")
    assert dend.merges.shape[0] == 2
    assert dend.n_components == 2
    assert cut_partition(dend, 2).labels.tolist() == [1, 1, 2, 2]
    with pytest.raises(InvalidParameter):
        cut_partition(dend, 1)


def test_cut_extremes(rng):
    x = rng.normal(size=(12, 2))
    links = build_knn_links(rng.random((12, 2)), 3)
    dend = cahc_fit(euclidean_matrix(x), links)
    assert cut_partition(dend, 12).labels.tolist() == list(range(1, 13))
    _, comp = connected_components(links.to_sparse(), directed=False)
    assert cut_partition(dend, dend.n_components) == Partition.from_groups(comp)


@pytest.mark.parametrize("method", LINKAGES)
def test_lance_williams_update(method, rng):
    x = rng.normal(size=(9, 3))
    d = euclidean_matrix(x)
    i, j, k = [0, 1, 2], [3, 4], [5, 6, 7, 8]
    spec = LinkageSpec(method)
    if spec.squared:
        # Ward recursion runs on the squared scale of the same definitional cost
        got = spec.update(ward_cost(x, i, k), ward_cost(x, j, k), ward_cost(x, i, j), 3, 2, 4)
        assert got == pytest.approx(ward_cost(x, i + j, k), rel=1e-12)
    else:
        got = spec.update(
            definitional(method, x, d, i, k), definitional(method, x, d, j, k), definitional(method, x, d, i, j), 3, 2, 4
        )
        assert got == pytest.approx(definitional(method, x, d, i + j, k), rel=1e-12)


def test_unknown_linkage_and_shape():
    with pytest.raises(InvalidParameter):
        LinkageSpec("median")
    with pytest.raises(ShapeMismatch):
        cahc_fit(np.zeros((3, 3)), full_links(4))


def test_tie_breaking_smallest_pair():
    # all distances equal: first merge must be (0, 1)
    d = np.ones((4, 4)) - np.eye(4)
    dend = cahc_fit(d, full_links(4), "average")
    assert tuple(dend.merges[0]) == (0, 1)


def _connected_within(links, labels, g):
    idx = np.flatnonzero(labels == g)
    sub = links.to_sparse()[idx][:, idx]
    return connected_components(sub, directed=False)[0] == 1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(8, 40), st.sampled_from(LINKAGES))
def test_contiguity_and_refinement(seed, n, method):
    r = np.random.default_rng(seed)
    coords = r.random((n, 2))
    x = r.normal(size=(n, 2))
    links = build_knn_links(coords, int(r.integers(1, 5)))
    dend = cahc_fit(euclidean_matrix(x), links, method)
    prev = None
    for G in range(n, dend.n_components - 1, -1):
        part = cut_partition(dend, G)
        assert part.G == G
        for g in range(1, G + 1):
            assert _connected_within(links, part.labels, g)
        if prev is not None:
            # each finer cluster sits inside exactly one coarser cluster
            for g in range(1, prev.G + 1):
                assert np.unique(part.labels[prev.labels == g]).size == 1
        prev = part


def test_silhouette_two_tight_clusters():
    x = np.array([[0.0], [0.1], [10.0], [10.1]])
    links = full_links(4)
    s = spatial_silhouette(euclidean_matrix(x), links, Partition(np.array([1, 1, 2, 2])))
    assert np.all(s.scores > 0.9)
    # hand value for point 0: a = 0.1, b = (10 + 10.1) / 2
    assert s.scores[0] == pytest.approx(1 - 0.1 / 10.05)


def test_silhouette_equidistant_point_is_zero():
    d = np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 2.0], [1.0, 2.0, 0.0]])
    s = spatial_silhouette(d, full_links(3), Partition(np.array([1, 1, 2])))
    assert s.scores[0] == 0.0
    assert s.scores[2] == 0.0  # singleton


def brute_silhouette(d, labels, adj):
    n = len(labels)
    out = np.zeros(n)
    G = labels.max()
    for i in range(n):
        g = labels[i]
        own = [j for j in range(n) if labels[j] == g and j != i]
        if not own:
            continue
        a = np.mean([d[i, j] for j in own])
        bs = [np.mean(d[i, labels == h]) for h in range(1, G + 1) if h != g and adj[g - 1, h - 1]]
        if not bs:
            continue
        b = min(bs)
        out[i] = (b - a) / max(a, b) if max(a, b) > 0 else 0.0
    return out


def test_silhouette_ignores_unlinked_cluster(rng):
    # chain 1 - 2 - 3 in space; cluster 3 is closest to cluster 1 in attributes
    coords = np.array([[0, 0], [1, 0], [5, 0], [6, 0], [10, 0], [11, 0]], float)
    x = np.array([[0.0], [0.2], [9.0], [9.2], [1.0], [1.2]])
    links = links_from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)])
    part = Partition(np.array([1, 1, 2, 2, 3, 3]))
    d = euclidean_matrix(x)
    s = spatial_silhouette(d, links, part)
    adj = cluster_adjacency(links, part.labels, 3)
    assert not adj[0, 2]
    assert np.allclose(s.scores, brute_silhouette(d, part.labels, adj))
    unrestricted = brute_silhouette(d, part.labels, np.ones((3, 3), bool))
    assert s.scores[0] > unrestricted[0]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(4, 30))
def test_silhouette_bounds_and_oracle(seed, n):
    r = np.random.default_rng(seed)
    x = r.normal(size=(n, 2))
    links = build_knn_links(r.random((n, 2)), 2)
    part = Partition.from_groups(r.integers(0, 3, n))
    if part.G < 2:
        return
    d = euclidean_matrix(x)
    s = spatial_silhouette(d, links, part)
    assert np.all((s.scores >= -1) & (s.scores <= 1))
    adj = cluster_adjacency(links, part.labels, part.G)
    assert np.allclose(s.scores, brute_silhouette(d, part.labels, adj))


def test_select_single_cell(two_blobs):
    sel = select_params(two_blobs, [4], [3])
    assert (sel.m, sel.G) == (4, 3)
    assert sel.surface.shape == (1, 1)


def test_select_two_disconnected_blobs():
    # constant attributes within each blob: every cut scores 0 and the tie goes to G = 2
    left = np.column_stack((np.arange(6.0), np.zeros(6)))
    coords = np.vstack((left, left + [50.0, 0.0]))
    attrs = np.repeat([[0.0], [5.0]], 6, axis=0)
    ds = SpatialDataset(coords, attrs)
    sel = select_params(ds, [1, 2], range(2, 6))
    assert sel.G == 2
    assert np.nanmax(sel.surface) == 0.0


def test_select_separable_linked_blobs(two_blobs):
    sel = select_params(two_blobs, range(2, 6), range(2, 6))
    assert sel.G == 2
    rows = list(sel.rows())
    assert len(rows) == 16


def test_select_threads_match(two_blobs):
    a = select_params(two_blobs, range(2, 6), range(2, 5))
    b = select_params(two_blobs, range(2, 6), range(2, 5), threads=3)
    assert np.array_equal(a.surface, b.surface, equal_nan=True)


def test_select_grid_errors(two_blobs):
    with pytest.raises(InvalidParameter):
        select_params(two_blobs, [], [2])
    with pytest.raises(InvalidParameter):
        select_params(two_blobs, [3], [51])
