"""Hot loops with a numba backend and a pure-numpy fallback.

The numba backend is used when numba imports cleanly, unless the
environment variable ``REPGAME_DISABLE_NUMBA`` is set to a truthy value.
Both backends consume identical inputs (including pre-drawn uniforms), so
the sampled paths agree; floating-point summaries agree to rounding.
"""
import importlib
import os

from . import _numpy

_DISABLED = os.environ.get("REPGAME_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")


def _load_numba():
    return importlib.import_module(__name__ + "._numba")


_numba = None
if not _DISABLED:
    try:
        _numba = _load_numba()
    except ImportError:  # numba missing or broken: stay on numpy
        _numba = None

BACKEND = "numba" if _numba is not None else "numpy"
_impl = _numba if _numba is not None else _numpy

KERNELS = (
    "simulate_paths",
    "discounted_frequencies",
    "count_upcrossings",
    "walk_tree",
    "cover_by_simplices",
    "informative_hat_check",
)


def get_backend(name=None):
    """Module implementing the kernels: ``"numba"``, ``"numpy"`` or the active one."""
    if name is None:
        return _impl
    if name == "numpy":
        return _numpy
    if name == "numba":
        return _numba if _numba is not None else _load_numba()
    raise ValueError(f"unknown kernel backend {name!r}")


def numba_available() -> bool:
    try:
        get_backend("numba")
    except ImportError:
        return False
    return True


simulate_paths = _impl.simulate_paths
discounted_frequencies = _impl.discounted_frequencies
count_upcrossings = _impl.count_upcrossings
walk_tree = _impl.walk_tree
cover_by_simplices = _impl.cover_by_simplices
informative_hat_check = _impl.informative_hat_check
