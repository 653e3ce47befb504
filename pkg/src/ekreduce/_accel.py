"""Numba switch.

Hot kernels come in two flavours: an ``@njit`` loop version and a pure-numpy
version. Set ``EKREDUCE_DISABLE_NUMBA=1`` to force the numpy path (useful for
debugging and for the benchmark comparison).
"""

import os

DISABLE_ENV = "EKREDUCE_DISABLE_NUMBA"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False


def numba_enabled():
    flag = os.environ.get(DISABLE_ENV, "").strip().lower()
    return HAVE_NUMBA and flag not in ("1", "true", "yes", "on")


def njit(func):
    """Compile ``func`` with numba when available, otherwise return it unchanged."""
    if HAVE_NUMBA:
        return numba.njit(cache=True)(func)
    return func  # pragma: no cover
