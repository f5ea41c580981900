"""Kernel backend selection.

Prefers the compiled Cython extension; falls back to the NumPy
implementations when it is not built. Set ATTNSENT_PURE_PYTHON=1 to force
the fallback (used by the backend-comparison benchmark and tests).

The two backends compute the same quantities but may differ in the last
bits because summation order differs; callers must not rely on bit equality
across backends. Within one backend, results are deterministic.
"""

import os

from attnsent import _pykernels

if os.environ.get("ATTNSENT_PURE_PYTHON", "").strip() not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from attnsent import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

softmax = _impl.softmax
dot = _impl.dot
cosine = _impl.cosine
weighted_rowsum = _impl.weighted_rowsum
pair_dots = _impl.pair_dots
scatter_add_rows = _impl.scatter_add_rows
scatter_add_gathered = _impl.scatter_add_gathered


def available_backends():
    """Names of importable backends (for tests and the benchmark)."""
    names = ["python"]
    try:
        from attnsent import _ckernels  # noqa: F401

        names.insert(0, "cython")
    except ImportError:
        pass
    return names


def backend_module(name):
    if name == "python":
        return _pykernels
    if name == "cython":
        from attnsent import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")
