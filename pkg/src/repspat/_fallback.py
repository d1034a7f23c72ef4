"""Pure NumPy implementations of the hot kernels.

These mirror ``_core.pyx``: the merge loop evaluates the same Lance-Williams
expressions in the same order, so both backends give identical merge
sequences. Kernel sums agree up to floating-point summation order.
"""

from __future__ import annotations

import heapq

import numpy as np
from scipy.spatial.distance import cdist

SINGLE, COMPLETE, AVERAGE, WARD = 0, 1, 2, 3
GAUSSIAN, LAPLACIAN, IMQ = 0, 1, 2
EUCLIDEAN, CITYBLOCK, JACCARD = 0, 1, 2


def _find(owner: np.ndarray, s: int) -> int:
    root = s
    while owner[root] != root:
        root = owner[root]
    while owner[s] != root:
        owner[s], s = root, owner[s]
    return root


def cahc_merge(d: np.ndarray, indptr: np.ndarray, indices: np.ndarray, method: int):
    """Constrained agglomeration on a dense dissimilarity matrix.

    ``d`` is overwritten with Lance-Williams updates. Returns
    ``(merges, heights, sizes)`` where ``merges[k] = (left_id, right_id)``;
    the new cluster created at step ``k`` has id ``n + k``.
    """
    n = d.shape[0]
    K = 2 * n
    slot_id = np.arange(n, dtype=np.int64)
    id_slot = np.full(2 * n, -1, dtype=np.int64)
    id_slot[:n] = np.arange(n)
    size = np.ones(n, dtype=np.float64)
    owner = np.arange(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    nbrs = [list(indices[indptr[i] : indptr[i + 1]]) for i in range(n)]

    heap = []
    for i in range(n):
        for j in nbrs[i]:
            if i < j:
                heap.append((d[i, j], i * K + j))
    heapq.heapify(heap)

    merges, heights, sizes = [], [], []
    next_id = n
    while heap:
        dv, key = heapq.heappop(heap)
        a_id, b_id = divmod(key, K)
        sa, sb = id_slot[a_id], id_slot[b_id]
        if sa < 0 or sb < 0:
            continue
        dij = d[sa, sb]
        active[sa] = active[sb] = False
        ks = np.flatnonzero(active)
        dik, djk = d[sa, ks], d[sb, ks]
        ni, nj = size[sa], size[sb]
        if method == SINGLE:
            new = np.minimum(dik, djk)
        elif method == COMPLETE:
            new = np.maximum(dik, djk)
        elif method == AVERAGE:
            new = (ni * dik + nj * djk) / (ni + nj)
        else:
            nk = size[ks]
            new = ((ni + nk) * dik + (nj + nk) * djk - nk * dij) / (ni + nj + nk)
        d[sa, ks] = new
        d[ks, sa] = new
        active[sa] = True
        size[sa] = ni + nj

        merges.append((a_id, b_id))
        heights.append(dv)
        sizes.append(ni + nj)
        id_slot[a_id] = id_slot[b_id] = -1
        id_slot[next_id] = sa
        slot_id[sa] = next_id
        owner[sb] = sa

        seen = set()
        merged = []
        for s in nbrs[sa] + nbrs[sb]:
            r = _find(owner, s)
            if r != sa and r not in seen:
                seen.add(r)
                merged.append(r)
        nbrs[sa] = merged
        nbrs[sb] = []
        for k in merged:
            heapq.heappush(heap, (d[sa, k], slot_id[k] * K + next_id))
        next_id += 1

    merges = np.asarray(merges, dtype=np.int64).reshape(-1, 2)
    return merges, np.asarray(heights, dtype=np.float64), np.asarray(sizes, dtype=np.int64)


def _pair_dist(a: np.ndarray, b: np.ndarray, metric: int) -> np.ndarray:
    if metric == JACCARD:
        inter = a @ b.T
        union = a.sum(axis=1)[:, None] + b.sum(axis=1)[None, :] - inter
        out = np.zeros_like(inter)
        nz = union > 0
        out[nz] = 1.0 - inter[nz] / union[nz]
        return out
    return cdist(a, b, "cityblock" if metric == CITYBLOCK else "euclidean")


def _kernel(dist: np.ndarray, kernel: int, param: float) -> np.ndarray:
    if kernel == GAUSSIAN:
        return np.exp(-(dist * dist) / (param * param))
    if kernel == LAPLACIAN:
        return np.exp(-dist / param)
    return 1.0 / np.sqrt(dist * dist + param * param)


def kernel_block_sums(x, blocks, nblocks: int, kernel: int, param: float, metric: int,
                      chunk: int = 512):
    """``S[a, b] = sum of k(x_i, x_j)`` over rows i in block a and j in block b.

    Rows are processed in chunks so memory stays at O(chunk * n).
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    blocks = np.asarray(blocks, dtype=np.int64)
    order = np.argsort(blocks, kind="stable")
    x, blocks = x[order], blocks[order]
    counts = np.bincount(blocks, minlength=nblocks)
    present = np.flatnonzero(counts)
    starts = np.concatenate(([0], np.cumsum(counts)))[present]
    s = np.zeros((nblocks, nblocks))
    n = x.shape[0]
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        k = _kernel(_pair_dist(x[start:stop], x, metric), kernel, param)
        cols = np.add.reduceat(k, starts, axis=1)
        rows = np.zeros((nblocks, present.size))
        np.add.at(rows, blocks[start:stop], cols)
        s[:, present] += rows
    return s
