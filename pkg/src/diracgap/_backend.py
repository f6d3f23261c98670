"""Kernel backend selection.

``DGL_BACKEND=numpy`` forces the pure-numpy kernels; ``DGL_BACKEND=numba``
(the default when numba imports) compiles the loop kernels with ``@njit``.
The flag is read once at import time.
"""
import os

_requested = os.environ.get("DGL_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"DGL_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    if _requested == "numpy":
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False
    _njit = None

BACKEND = "numba" if HAVE_NUMBA else "numpy"


def njit(func):
    """Compile ``func`` with numba when the numba backend is active."""
    if HAVE_NUMBA:
        return _njit(cache=True, fastmath=False)(func)
    return func
