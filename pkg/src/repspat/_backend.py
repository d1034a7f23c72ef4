"""Select the compiled kernels when available, else the NumPy fallback.

Set ``REPSPAT_BACKEND=python`` to force the fallback.
"""

import os

from . import _fallback

SINGLE, COMPLETE, AVERAGE, WARD = _fallback.SINGLE, _fallback.COMPLETE, _fallback.AVERAGE, _fallback.WARD
GAUSSIAN, LAPLACIAN, IMQ = _fallback.GAUSSIAN, _fallback.LAPLACIAN, _fallback.IMQ
EUCLIDEAN, CITYBLOCK, JACCARD = _fallback.EUCLIDEAN, _fallback.CITYBLOCK, _fallback.JACCARD

_core = None
if os.environ.get("REPSPAT_BACKEND", "").lower() != "python":
    try:
        from . import _core
    except ImportError:
        _core = None

BACKENDS = {"python": _fallback}
if _core is not None:
    BACKENDS["compiled"] = _core

NAME = "compiled" if _core is not None else "python"
_active = BACKENDS[NAME]


def get(name: str | None = None):
    """Return the kernel module named ``name`` (default: the active one)."""
    if name is None:
        return _active
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} is not available; have {sorted(BACKENDS)}") from None


def cahc_merge(d, indptr, indices, method, backend=None):
    return get(backend).cahc_merge(d, indptr, indices, method)


def kernel_block_sums(x, blocks, nblocks, kernel, param, metric, backend=None):
    return get(backend).kernel_block_sums(x, blocks, nblocks, kernel, param, metric)
