"""Hot numeric kernels with two interchangeable backends.

The numba backend JIT-compiles per-element loops; the numpy backend is a
vectorized fallback with identical semantics. Selection order:

  1. env var PANOMESH_BACKEND=numba|numpy
  2. numba if importable, else numpy

``panomesh bench kernels`` compares the two on realistic workloads.
"""

import os

from . import numpy_backend

_BACKENDS = {"numpy": numpy_backend}

try:
    from . import numba_backend

    _BACKENDS["numba"] = numba_backend
    _DEFAULT = "numba"
except ImportError:  # pragma: no cover - numba is an install-time extra
    _DEFAULT = "numpy"

BACKEND = os.environ.get("PANOMESH_BACKEND", _DEFAULT).lower()
if BACKEND not in _BACKENDS:
    raise RuntimeError(
        f"PANOMESH_BACKEND={BACKEND!r} not available; choices: {sorted(_BACKENDS)}"
    )

_impl = _BACKENDS[BACKEND]

locate_root = _impl.locate_root
descend_level = _impl.descend_level
bilinear_gather = _impl.bilinear_gather
scatter_add_rows = _impl.scatter_add_rows
scatter_add_flat = _impl.scatter_add_flat


def available_backends():
    return sorted(_BACKENDS)


def get_backend(name):
    """Return a specific backend module (used by benchmarks and parity tests)."""
    return _BACKENDS[name]
