import os
import subprocess
import sys

import numpy as np
import pytest

from repspat import _backend
from repspat.cahc import cahc_fit
from repspat.data_model import Partition, SpatialDataset
from repspat.dissimilarity import euclidean_matrix
from repspat.mmd import KernelSpec, gram
from repspat.permtest import block_permutation_null, test_all_pairs as run_all_pairs
from repspat.spatial_graph import build_knn_links

compiled = pytest.mark.skipif("compiled" not in _backend.BACKENDS, reason="extension not built")


def dense_block_sums(x, blocks, nb, spec):
    k = gram(spec, x)
    s = np.zeros((nb, nb))
    np.add.at(s, (blocks[:, None], blocks[None, :]), k)
    return s


@pytest.mark.parametrize("name", sorted(_backend.BACKENDS))
@pytest.mark.parametrize("kp", [("imq", 1.0), ("gaussian", 2.0), ("laplacian", 2.0)])
def test_block_sums_match_dense(name, kp, rng):
    spec = KernelSpec(*kp)
    x = rng.normal(size=(90, 3))
    blocks = rng.integers(0, 7, 90)
    got = _backend.kernel_block_sums(x, blocks, 7, spec.code, spec.param, spec.metric_code, backend=name)
    assert np.allclose(got, dense_block_sums(x, blocks, 7, spec), rtol=1e-12, atol=1e-10)


def test_block_sums_jaccard_python(rng):
    spec = KernelSpec("imq", 1.0, "jaccard")
    x = (rng.random((40, 6)) < 0.5).astype(float)
    blocks = rng.integers(0, 4, 40)
    got = _backend.kernel_block_sums(x, blocks, 4, spec.code, spec.param, spec.metric_code, backend="python")
    assert np.allclose(got, dense_block_sums(x, blocks, 4, spec), atol=1e-10)


@compiled
@pytest.mark.parametrize("method", ["single", "complete", "average", "ward"])
def test_merge_sequences_identical(method, rng):
    coords = rng.uniform(0, 10, (150, 2))
    d = euclidean_matrix(rng.normal(size=(150, 4)))
    links = build_knn_links(coords, 5)
    a = cahc_fit(d, links, method, backend="python")
    b = cahc_fit(d, links, method, backend="compiled")
    assert np.array_equal(a.merges, b.merges)
    assert np.allclose(a.heights, b.heights, rtol=1e-12, atol=0)


@compiled
def test_compiled_jaccard_matches_python(rng):
    spec = KernelSpec("imq", 1.0, "jaccard")
    x = (rng.random((40, 6)) < 0.5).astype(float)
    blocks = rng.integers(0, 4, 40)
    args = (x, blocks, 4, spec.code, spec.param, spec.metric_code)
    assert np.allclose(
        _backend.kernel_block_sums(*args, backend="python"),
        _backend.kernel_block_sums(*args, backend="compiled"),
        atol=1e-12,
    )


@compiled
def test_pipeline_tests_agree_across_backends(rng):
    labels = np.repeat([1, 2, 3], 30)
    attrs = rng.normal(size=(90, 2)) + (labels[:, None] == 2) * 4.0
    ds = SpatialDataset(rng.random((90, 2)), attrs)
    part = Partition(labels)
    a = run_all_pairs(ds, part, B=199, seed=3, backend="python")
    b = run_all_pairs(ds, part, B=199, seed=3, backend="compiled")
    assert [(r.p_value, r.reject) for r in a] == [(r.p_value, r.reject) for r in b]
    assert np.allclose([r.mmd2 for r in a], [r.mmd2 for r in b], rtol=1e-12)
    xg, xh = attrs[:30], attrs[30:60]
    na = block_permutation_null(xg, xh, B=50, seed=1, backend="python")
    nb = block_permutation_null(xg, xh, B=50, seed=1, backend="compiled")
    assert np.allclose(na, nb, rtol=1e-10, atol=1e-14)


def test_unknown_backend():
    with pytest.raises(ValueError):
        _backend.get("fortran")


def test_env_forces_fallback():
    env = dict(os.environ, REPSPAT_BACKEND="python")
    code = "import repspat; print(repspat.BACKEND)"
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert res.stdout.strip() == "python"


def test_benchmark_script_runs():
    script = os.path.join(os.path.dirname(__file__), os.pardir, "benchmarks", "bench_backends.py")
    res = subprocess.run([sys.executable, script, "--sizes", "120", "--repeat", "1"], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
