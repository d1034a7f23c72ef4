# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled hot kernels: the constrained merge loop and kernel block sums.

Semantics match ``_fallback`` exactly; see that module for the contract.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, fabs
from libcpp.vector cimport vector
from libcpp.queue cimport priority_queue
from libcpp.pair cimport pair

cnp.import_array()

ctypedef long long i64
ctypedef pair[double, i64] entry

cdef enum:
    SINGLE = 0
    COMPLETE = 1
    AVERAGE = 2
    WARD = 3

cdef enum:
    GAUSSIAN = 0
    LAPLACIAN = 1
    IMQ = 2

cdef enum:
    EUCLIDEAN = 0
    CITYBLOCK = 1
    JACCARD = 2


cdef inline i64 _find(i64[::1] owner, i64 s) nogil:
    cdef i64 root = s, nxt
    while owner[root] != root:
        root = owner[root]
    while owner[s] != root:
        nxt = owner[s]
        owner[s] = root
        s = nxt
    return root


def cahc_merge(double[:, ::1] d, i64[::1] indptr, i64[::1] indices, int method):
    cdef i64 n = d.shape[0]
    cdef i64 K = 2 * n
    cdef i64 i, j, t, k, s, r, a_id, b_id, sa, sb, key, next_id = n, nact = n, nm = 0
    cdef double dv, dij, dik, djk, ni, nj, nk, new
    cdef i64[::1] slot_id = np.arange(n, dtype=np.int64)
    cdef i64[::1] id_slot = np.full(2 * n, -1, dtype=np.int64)
    cdef i64[::1] owner = np.arange(n, dtype=np.int64)
    cdef i64[::1] act = np.arange(n, dtype=np.int64)
    cdef i64[::1] pos = np.arange(n, dtype=np.int64)
    cdef i64[::1] stamp = np.full(n, -1, dtype=np.int64)
    cdef double[::1] size = np.ones(n, dtype=np.float64)
    cdef i64[:, ::1] merges = np.empty((max(n - 1, 0), 2), dtype=np.int64)
    cdef double[::1] heights = np.empty(max(n - 1, 0), dtype=np.float64)
    cdef i64[::1] sizes = np.empty(max(n - 1, 0), dtype=np.int64)
    cdef vector[vector[i64]] nbrs = vector[vector[i64]](n)
    cdef vector[i64] merged
    # max-heap on (-d, -key) gives the smallest d, then the smallest (min id, max id)
    cdef priority_queue[entry] heap

    for i in range(n):
        id_slot[i] = i
        for t in range(indptr[i], indptr[i + 1]):
            j = indices[t]
            nbrs[i].push_back(j)
            if i < j:
                heap.push(entry(-d[i, j], -(i * K + j)))

    with nogil:
        while not heap.empty():
            dv = -heap.top().first
            key = -heap.top().second
            heap.pop()
            a_id = key // K
            b_id = key % K
            sa = id_slot[a_id]
            sb = id_slot[b_id]
            if sa < 0 or sb < 0:
                continue
            dij = d[sa, sb]
            ni = size[sa]
            nj = size[sb]
            # drop sb from the active list
            t = pos[sb]
            nact -= 1
            act[t] = act[nact]
            pos[act[t]] = t
            for t in range(nact):
                k = act[t]
                if k == sa:
                    continue
                dik = d[sa, k]
                djk = d[sb, k]
                if method == SINGLE:
                    new = dik if dik < djk else djk
                elif method == COMPLETE:
                    new = dik if dik > djk else djk
                elif method == AVERAGE:
                    new = (ni * dik + nj * djk) / (ni + nj)
                else:
                    nk = size[k]
                    new = ((ni + nk) * dik + (nj + nk) * djk - nk * dij) / (ni + nj + nk)
                d[sa, k] = new
                d[k, sa] = new
            size[sa] = ni + nj

            merges[nm, 0] = a_id
            merges[nm, 1] = b_id
            heights[nm] = dv
            sizes[nm] = <i64>(ni + nj)
            nm += 1
            id_slot[a_id] = -1
            id_slot[b_id] = -1
            id_slot[next_id] = sa
            slot_id[sa] = next_id
            owner[sb] = sa

            merged.clear()
            for t in range(<i64>nbrs[sa].size()):
                r = _find(owner, nbrs[sa][t])
                if r != sa and stamp[r] != next_id:
                    stamp[r] = next_id
                    merged.push_back(r)
            for t in range(<i64>nbrs[sb].size()):
                r = _find(owner, nbrs[sb][t])
                if r != sa and stamp[r] != next_id:
                    stamp[r] = next_id
                    merged.push_back(r)
            nbrs[sa].swap(merged)
            nbrs[sb].clear()
            nbrs[sb].shrink_to_fit()
            for t in range(<i64>nbrs[sa].size()):
                k = nbrs[sa][t]
                heap.push(entry(-d[sa, k], -(slot_id[k] * K + next_id)))
            next_id += 1

    return (np.asarray(merges[:nm]).copy(), np.asarray(heights[:nm]).copy(),
            np.asarray(sizes[:nm]).copy())


def kernel_block_sums(double[:, ::1] x, i64[::1] blocks, i64 nblocks, int kernel,
                      double param, int metric):
    cdef i64 n = x.shape[0], p = x.shape[1]
    cdef i64 i, j, c, bi, bj
    cdef double acc, diff, kv, inter, uni
    cdef double[:, ::1] s = np.zeros((nblocks, nblocks), dtype=np.float64)
    cdef double[::1] rowsum = np.zeros(n, dtype=np.float64)
    cdef double p2 = param * param
    if metric == JACCARD:
        for i in range(n):
            acc = 0.0
            for c in range(p):
                acc += x[i, c]
            rowsum[i] = acc
    with nogil:
        for i in range(n):
            bi = blocks[i]
            for j in range(i, n):
                if metric == JACCARD:
                    inter = 0.0
                    for c in range(p):
                        inter += x[i, c] * x[j, c]
                    uni = rowsum[i] + rowsum[j] - inter
                    acc = 1.0 - inter / uni if uni > 0 else 0.0
                    if acc < 0.0:
                        acc = 0.0
                elif metric == CITYBLOCK:
                    acc = 0.0
                    for c in range(p):
                        acc += fabs(x[i, c] - x[j, c])
                else:
                    acc = 0.0
                    for c in range(p):
                        diff = x[i, c] - x[j, c]
                        acc += diff * diff
                    acc = sqrt(acc)
                if kernel == GAUSSIAN:
                    kv = exp(-(acc * acc) / p2)
                elif kernel == LAPLACIAN:
                    kv = exp(-acc / param)
                else:
                    kv = 1.0 / sqrt(acc * acc + p2)
                bj = blocks[j]
                if i == j:
                    s[bi, bi] += kv
                else:
                    s[bi, bj] += kv
                    s[bj, bi] += kv
    return np.asarray(s)
