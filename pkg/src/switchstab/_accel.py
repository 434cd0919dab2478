"""Selects between numba-compiled and pure-numpy kernels.

Set ``SWITCHSTAB_DISABLE_NUMBA=1`` to force the numpy path (also used
automatically when numba is not importable).
"""
import os

_DISABLED = os.environ.get("SWITCHSTAB_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True)(func)
