import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repspat.data_model import Partition, PairTestResult
from repspat.errors import MissingPair, ShapeMismatch
from repspat.reassign import build_similarity_graph, maximal_cliques, reassign_labels

EXAMPLE_KEEP = {(1, 2), (1, 3), (2, 3), (4, 5), (4, 6), (5, 6)}


def results_from(G, keep, weights=None):
    weights = weights or {}
    out = []
    for g, h in itertools.combinations(range(1, G + 1), 2):
        out.append(PairTestResult(g, h, weights.get((g, h), 0.5), 99, 0.5, 0.5, (g, h) not in keep))
    return out


def identity(G, per=3):
    return Partition(np.repeat(np.arange(1, G + 1), per))


def test_all_rejected_edgeless():
    graph = build_similarity_graph(results_from(4, set()), 4)
    assert graph.edges() == []
    part = identity(4)
    for mode in ("components", "cliques"):
        assert reassign_labels(graph, part, mode) == part


def test_none_rejected_complete():
    keep = set(itertools.combinations(range(1, 6), 2))
    graph = build_similarity_graph(results_from(5, keep), 5)
    assert len(graph.edges()) == 10
    for mode in ("components", "cliques"):
        assert reassign_labels(graph, identity(5), mode).G == 1


def test_worked_example_two_triangles():
    graph = build_similarity_graph(results_from(7, EXAMPLE_KEEP), 7)
    assert {(g, h) for g, h, _ in graph.edges()} == EXAMPLE_KEEP
    for mode in ("components", "cliques"):
        final = reassign_labels(graph, identity(7), mode)
        assert final.G == 3
        assert final.labels.tolist() == [1] * 9 + [2] * 9 + [3] * 3


def test_path_modes():
    w = {(1, 2): 0.01, (2, 3): 0.04}
    graph = build_similarity_graph(results_from(3, {(1, 2), (2, 3)}, w), 3)
    part = identity(3, per=1)
    assert reassign_labels(graph, part, "components").labels.tolist() == [1, 1, 1]
    assert reassign_labels(graph, part, "cliques").labels.tolist() == [1, 1, 2]
    # heavier edge on the other side flips the pairing
    w = {(1, 2): 0.04, (2, 3): 0.01}
    graph = build_similarity_graph(results_from(3, {(1, 2), (2, 3)}, w), 3)
    assert reassign_labels(graph, part, "cliques").labels.tolist() == [1, 2, 2]


def test_clique_weight_tie_goes_to_smaller_ids():
    graph = build_similarity_graph(results_from(3, {(1, 2), (2, 3)}), 3)
    assert reassign_labels(graph, identity(3, 1), "cliques").labels.tolist() == [1, 1, 2]


def test_weights_and_dot():
    graph = build_similarity_graph(results_from(3, {(1, 3)}, {(1, 3): 0.0123}), 3)
    assert graph.weight[0, 2] == graph.weight[2, 0] == 0.0123
    assert np.isnan(graph.weight[0, 1])
    dot = graph.to_dot()
    assert dot.startswith("graph similarity {")
    assert '1 -- 3 [label="0.0123"];' in dot
    assert "  2;" in dot


def test_missing_pair_and_mismatch():
    res = results_from(4, set())[:-1]
    with pytest.raises(MissingPair):
        build_similarity_graph(res, 4)
    graph = build_similarity_graph(results_from(3, set()), 3)
    with pytest.raises(ShapeMismatch):
        reassign_labels(graph, identity(4))


def test_accepts_dict_results():
    graph = build_similarity_graph([r.to_dict() for r in results_from(3, {(1, 2)})], 3)
    assert graph.neighbors(1) == {2}


def random_graph(seed, G):
    r = np.random.default_rng(seed)
    pairs = list(itertools.combinations(range(1, G + 1), 2))
    keep = {p for p in pairs if r.random() < 0.35}
    w = {p: float(r.random()) for p in pairs}
    return build_similarity_graph(results_from(G, keep, w), G), keep


def nx_graph(G, keep):
    g = nx.Graph()
    g.add_nodes_from(range(1, G + 1))
    g.add_edges_from(keep)
    return g


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 12))
def test_component_mode_matches_paths(seed, G):
    graph, keep = random_graph(seed, G)
    r = np.random.default_rng(seed + 1)
    part = Partition.from_groups(np.concatenate((np.arange(G), r.integers(0, G, 20))))
    final = reassign_labels(graph, part, "components")
    ref = nx_graph(G, keep)
    lab = {g: final.labels[np.flatnonzero(part.labels == g)[0]] for g in range(1, G + 1)}
    for g, h in itertools.combinations(range(1, G + 1), 2):
        assert (lab[g] == lab[h]) == nx.has_path(ref, g, h)
    assert sorted(set(final.labels.tolist())) == list(range(1, final.G + 1))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 12), st.sampled_from(["components", "cliques"]))
def test_coarsening(seed, G, mode):
    graph, _ = random_graph(seed, G)
    part = identity(G, per=2)
    final = reassign_labels(graph, part, mode)
    for g in range(1, G + 1):
        assert np.unique(final.labels[part.labels == g]).size == 1
    assert sorted(set(final.labels.tolist())) == list(range(1, final.G + 1))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12))
def test_cliques_match_networkx(seed, G):
    graph, keep = random_graph(seed, G)
    ref = sorted(tuple(sorted(v - 1 for v in c)) for c in nx.find_cliques(nx_graph(G, keep)))
    assert maximal_cliques(graph.adjacency) == ref


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=5), st.integers(0, 10_000))
def test_modes_agree_on_disjoint_cliques(sizes, seed):
    keep, start = set(), 1
    for s in sizes:
        keep |= set(itertools.combinations(range(start, start + s), 2))
        start += s
    G = start - 1
    if G < 2:
        return
    r = np.random.default_rng(seed)
    perm = r.permutation(G) + 1
    keep = {tuple(sorted((int(perm[a - 1]), int(perm[b - 1])))) for a, b in keep}
    graph = build_similarity_graph(results_from(G, keep), G)
    part = identity(G)
    assert reassign_labels(graph, part, "components") == reassign_labels(graph, part, "cliques")
