"""Sparse inner-loop kernels with a numba path and a pure-numpy fallback.

The backend is chosen at import time from the ``NBMF_BACKEND`` environment
variable (``numba`` or ``numpy``). When unset, numba is used if it imports.
``NBMF_THREADS`` caps the numba thread pool. Call :func:`use` to switch at
runtime; solvers look kernels up through this module on every call.
"""

import logging
import os

from . import _numpy

logger = logging.getLogger(__name__)

KERNELS = ("sparse_dot", "scatter_rows", "scatter_add", "compute_phi", "allocation_term")

# The bundled TBB is too old for numba; prefer OpenMP, then workqueue.
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

try:
    from . import _numba

    logging.getLogger("numba").setLevel(logging.WARNING)
except ImportError:  # pragma: no cover - exercised only without numba
    _numba = None

_MODULES = {"numpy": _numpy}
if _numba is not None:
    _MODULES["numba"] = _numba

backend = None


def available_backends():
    return tuple(_MODULES)


def get(name):
    """Return the kernel module for backend ``name``."""
    try:
        return _MODULES[name]
    except KeyError:
        raise ValueError(
            f"unknown or unavailable kernel backend {name!r}; "
            f"available: {', '.join(_MODULES)}"
        ) from None


def use(name):
    """Bind the module-level kernel names to backend ``name``."""
    global backend
    module = get(name)
    for kernel in KERNELS:
        globals()[kernel] = getattr(module, kernel)
    backend = name
    return name


def _configure_threads():
    threads = os.environ.get("NBMF_THREADS")
    if not threads or _numba is None:
        return
    import numba

    numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))


def _default_backend():
    requested = os.environ.get("NBMF_BACKEND", "").strip().lower()
    if requested:
        if requested not in _MODULES:
            logger.warning("NBMF_BACKEND=%s unavailable, falling back to numpy", requested)
            return "numpy"
        return requested
    return "numba" if _numba is not None else "numpy"


_configure_threads()
use(_default_backend())
