"""Block-permutation null for MMD^2, p-values and Benjamini-Hochberg control."""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from . import _backend
from .data_model import Partition, PairTestResult, SpatialDataset
from .errors import EmptyDataset, InvalidParameter
from .mmd import KernelSpec, mmd2_biased, mmd2_from_sums

DEFAULT_B = 999
DEFAULT_Q = 0.05
MAX_ITER = 100
TOL = 1e-6
# relative slack when counting null replicates that tie with the observed value
TIE_RTOL = 1e-10
_CHUNK = 256


class DegeneratePermutation(UserWarning):
    """Each side forms a single block, so the null only swaps the two samples."""


def pair_rng(seed: int, a: int, b: int) -> np.random.Generator:
    """Counter-based stream keyed by ``(seed, a, b)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(a), int(b)))))


def block_count(n_rows: int, m: int) -> int:
    return max(1, int(n_rows) // int(m))


def _plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = ((x - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[c] = x[idx]
        closest = np.minimum(closest, ((x - centers[c]) ** 2).sum(axis=1))
    return centers


def _repair(x, labels, k):
    # move the far half of the largest block into each empty one
    while True:
        counts = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            return labels
        big = int(np.argmax(counts))
        idx = np.flatnonzero(labels == big)
        if idx.size < 2:
            return labels
        centre = x[idx].mean(axis=0)
        far = np.argsort(-((x[idx] - centre) ** 2).sum(axis=1), kind="stable")
        labels[idx[far[: idx.size // 2]]] = empty[0]


def kmeans_blocks(x, k: int, seed=0, *, rng: np.random.Generator | None = None) -> np.ndarray:
    """Lloyd iterations from k-means++ seeds; returns labels ``0..k-1``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    k = int(k)
    if k < 1:
        raise InvalidParameter("block count must be at least 1")
    if k > n:
        raise InvalidParameter(f"cannot form {k} blocks from {n} rows")
    if k == 1:
        return np.zeros(n, dtype=np.int64)
    rng = rng if rng is not None else np.random.default_rng(seed)
    centers = _plusplus(x, k, rng)
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(MAX_ITER):
        labels = cdist(x, centers, "sqeuclidean").argmin(axis=1)
        labels = _repair(x, labels, k)
        new = np.vstack([x[labels == c].mean(axis=0) for c in range(k)])
        shift = np.sqrt(((new - centers) ** 2).sum(axis=1)).max()
        centers = new
        if shift <= TOL:
            break
    labels = cdist(x, centers, "sqeuclidean").argmin(axis=1)
    return _repair(x, labels, k).astype(np.int64)


@dataclass(frozen=True, eq=False)
class BlockAssignment:
    blocks_g: np.ndarray
    blocks_h: np.ndarray
    b_g: int
    b_h: int


def assign_blocks(xg, xh, m: int, rng: np.random.Generator) -> BlockAssignment:
    xg, xh = np.asarray(xg, float), np.asarray(xh, float)
    bg, bh = block_count(len(xg), m), block_count(len(xh), m)
    return BlockAssignment(kmeans_blocks(xg, bg, rng=rng), kmeans_blocks(xh, bh, rng=rng), bg, bh)


class _PooledBlocks:
    """Kernel sums between every pair of pooled blocks, computed once."""

    def __init__(self, xg, xh, assign: BlockAssignment, spec: KernelSpec, backend=None):
        x = np.ascontiguousarray(np.vstack((xg, xh)), dtype=np.float64)
        blocks = np.concatenate((assign.blocks_g, assign.blocks_h + assign.b_g)).astype(np.int64)
        self.nb = assign.b_g + assign.b_h
        self.s = _backend.kernel_block_sums(
            x, blocks, self.nb, spec.code, spec.param, spec.metric_code, backend=backend
        )
        self.size = np.bincount(blocks, minlength=self.nb).astype(float)
        self.rowsum = self.s.sum(axis=1)
        self.total = self.rowsum.sum()
        self.n = x.shape[0]

    def mmd2(self, z: np.ndarray) -> np.ndarray:
        """Biased MMD^2 for each 0/1 block selection row in ``z``."""
        z = z.astype(float)
        sxx = np.einsum("rb,rb->r", z @ self.s, z)
        sxy = z @ self.rowsum - sxx
        syy = self.total - sxx - 2.0 * sxy
        nx = z @ self.size
        return mmd2_from_sums(sxx, syy, sxy, nx, self.n - nx)


def _draw(rng, size: np.ndarray, n_min: int, reps: int) -> np.ndarray:
    nb = size.size
    perm = np.argsort(rng.random((reps, nb)), axis=1, kind="stable")
    cum = np.cumsum(size[perm], axis=1)
    cut = np.argmax(cum >= n_min, axis=1)
    chosen = np.arange(nb)[None, :] <= cut[:, None]
    z = np.zeros((reps, nb), dtype=bool)
    np.put_along_axis(z, perm, chosen, axis=1)
    return z


def block_permutation_null(
    xg,
    xh,
    spec: KernelSpec | None = None,
    m: int = 8,
    B: int = DEFAULT_B,
    seed=0,
    *,
    rng: np.random.Generator | None = None,
    assign: BlockAssignment | None = None,
    backend: str | None = None,
    return_selections: bool = False,
):
    """Null MMD^2 sample from pooled-block draws.

    Blocks are shuffled and taken in order until the drawn rows reach the
    size of the smaller cluster; those rows form one pseudo-sample and the
    remaining blocks the other.
    """
    spec = spec or KernelSpec()
    xg, xh = np.asarray(xg, float), np.asarray(xh, float)
    if xg.ndim == 1:
        xg, xh = xg[:, None], xh[:, None]
    if len(xg) < 1 or len(xh) < 1:
        raise EmptyDataset("both samples need at least one row")
    B = int(B)
    if B < 1:
        raise InvalidParameter("B must be at least 1")
    rng = rng if rng is not None else np.random.default_rng(seed)
    if assign is None:
        assign = assign_blocks(xg, xh, m, rng)
    if assign.b_g == 1 and assign.b_h == 1:
        warnings.warn(
            "one block per cluster: the permutation null reduces to a swap",
            DegeneratePermutation,
            stacklevel=2,
        )
    pooled = _PooledBlocks(xg, xh, assign, spec, backend)
    n_min = min(len(xg), len(xh))
    null = np.empty(B)
    sel = [] if return_selections else None
    for start in range(0, B, _CHUNK):
        reps = min(_CHUNK, B - start)
        z = _draw(rng, pooled.size, n_min, reps)
        null[start : start + reps] = pooled.mmd2(z)
        if sel is not None:
            sel.append(z)
    if return_selections:
        return null, np.vstack(sel), assign
    return null


def p_value(obs: float, null, *, rtol: float = TIE_RTOL) -> float:
    """Add-one estimate ``(1 + #{null >= obs}) / (1 + B)``.

    Replicates within ``rtol * |obs|`` below ``obs`` count as ties; they
    differ from it only by summation order.
    """
    null = np.asarray(null, dtype=float).ravel()
    if null.size == 0:
        raise InvalidParameter("null sample is empty")
    thresh = obs - rtol * abs(obs)
    return float((1 + np.count_nonzero(null >= thresh)) / (1 + null.size))


def bh_adjust(p_values, q: float = DEFAULT_Q) -> tuple[np.ndarray, np.ndarray]:
    """Benjamini-Hochberg step-up adjusted p-values and rejections."""
    p = np.asarray(p_values, dtype=float).ravel()
    if not 0 < q < 1:
        raise InvalidParameter("q must lie in (0, 1)")
    if np.any((p <= 0) | (p > 1)):
        raise InvalidParameter("p-values must lie in (0, 1]")
    k = p.size
    if k == 0:
        return p.copy(), np.zeros(0, dtype=bool)
    order = np.argsort(p, kind="stable")
    scaled = p[order] * k / np.arange(1, k + 1)
    adj_sorted = np.minimum(np.minimum.accumulate(scaled[::-1])[::-1], 1.0)
    adj = np.empty(k)
    adj[order] = adj_sorted
    return adj, adj <= q


@dataclass(frozen=True, eq=False)
class _Raw:
    g: int
    h: int
    mmd2: float
    p: float
    null: np.ndarray


def _test_pair(dataset, partition, g, h, spec, m, B, seed, backend, keep_null):
    mg, mh = partition.members(g), partition.members(h)
    # stream keyed by cluster content, not id, so relabelling cannot change results
    rng = pair_rng(seed, mg[0], mh[0])
    xg, xh = dataset.attrs[mg], dataset.attrs[mh]
    obs = mmd2_biased(xg, xh, spec).value
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegeneratePermutation)
        null = block_permutation_null(xg, xh, spec, m, B, rng=rng, backend=backend)
    return _Raw(g, h, obs, p_value(obs, null), null if keep_null else None)


def test_all_pairs(
    dataset: SpatialDataset,
    partition: Partition,
    spec: KernelSpec | None = None,
    m: int = 8,
    B: int = DEFAULT_B,
    q: float = DEFAULT_Q,
    seed: int = 0,
    *,
    threads: int = 1,
    backend: str | None = None,
    keep_null: bool = False,
) -> list[PairTestResult]:
    """Test every cluster pair ``g < h`` and apply BH across all of them."""
    spec = spec or KernelSpec()
    if partition.n != dataset.n:
        raise InvalidParameter("partition and dataset sizes differ")
    G = partition.G
    if G < 2:
        raise InvalidParameter("need at least two clusters to test")
    pairs = [(g, h) for g in range(1, G + 1) for h in range(g + 1, G + 1)]

    def job(pair):
        lo, hi = pair
        # order the pair by smallest member so the computation is id-free
        a, b = (lo, hi) if partition.members(lo)[0] < partition.members(hi)[0] else (hi, lo)
        r = _test_pair(dataset, partition, a, b, spec, m, B, seed, backend, keep_null)
        return _Raw(lo, hi, r.mmd2, r.p, r.null)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            raw = list(pool.map(job, pairs))
    else:
        raw = [job(pr) for pr in pairs]
    adj, rej = bh_adjust([r.p for r in raw], q)
    return [
        PairTestResult(r.g, r.h, r.mmd2, B, r.p, float(a), bool(x), r.null)
        for r, a, x in zip(raw, adj, rej)
    ]


test_all_pairs.__test__ = False
