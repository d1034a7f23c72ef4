#!/usr/bin/env python
"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_backends.py --sizes 500 1000 2000 --repeat 3

Both backends are run on identical inputs and their outputs are compared
before any timing is reported.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from repspat import _backend
from repspat.cahc import _METHOD_CODE, Linkage
from repspat.dissimilarity import euclidean_matrix
from repspat.spatial_graph import build_knn_links


def _best(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cahc_case(n, m, seed):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0, 40, (n, 2))
    x = rng.normal(size=(n, 5))
    d = euclidean_matrix(x)
    a = build_knn_links(coords, m).to_sparse()
    work = np.ascontiguousarray(d * d)
    return work, a.indptr.astype(np.int64), a.indices.astype(np.int64)


def block_case(n, p, seed):
    rng = np.random.default_rng(seed)
    x = np.ascontiguousarray(rng.normal(size=(n, p)))
    nb = max(1, n // 8)
    blocks = np.sort(rng.integers(0, nb, n)).astype(np.int64)
    blocks[:nb] = np.arange(nb)
    return x, blocks, nb


def run(sizes, repeat, seed):
    if "compiled" not in _backend.BACKENDS:
        print("compiled backend not built; only the fallback is available", file=sys.stderr)
        return []
    rows = []
    for n in sizes:
        work, indptr, indices = cahc_case(n, 8, seed)
        ward = _METHOD_CODE[Linkage.WARD]

        # the merge loop overwrites its matrix, so each call gets a fresh copy
        def merge(name):
            return _backend.cahc_merge(work.copy(), indptr, indices, ward, backend=name)

        t_py, r_py = _best(lambda: merge("python"), repeat)
        t_c, r_c = _best(lambda: merge("compiled"), repeat)
        same = np.array_equal(r_py[0], r_c[0]) and np.allclose(r_py[1], r_c[1], rtol=1e-12, atol=0)
        rows.append({"kernel": "cahc_merge[ward]", "n": n, "python_s": t_py, "compiled_s": t_c,
                     "speedup": t_py / t_c, "agree": bool(same)})

        x, blocks, nb = block_case(n, 5, seed)
        call = (x, blocks, nb, _backend.IMQ, 1.0, _backend.EUCLIDEAN)
        t_py, s_py = _best(lambda: _backend.kernel_block_sums(*call, backend="python"), repeat)
        t_c, s_c = _best(lambda: _backend.kernel_block_sums(*call, backend="compiled"), repeat)
        rows.append({"kernel": "kernel_block_sums[imq]", "n": n, "python_s": t_py, "compiled_s": t_c,
                     "speedup": t_py / t_c, "agree": bool(np.allclose(s_py, s_c, rtol=1e-10))})
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[250, 500, 1000])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="also write rows to this file")
    args = ap.parse_args(argv)

    rows = run(args.sizes, args.repeat, args.seed)
    print(f"{'kernel':<24}{'n':>7}{'python s':>12}{'compiled s':>12}{'speedup':>9}  agree")
    for r in rows:
        print(f"{r['kernel']:<24}{r['n']:>7}{r['python_s']:>12.4f}{r['compiled_s']:>12.4f}"
              f"{r['speedup']:>9.1f}  {r['agree']}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
    return 0 if all(r["agree"] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
