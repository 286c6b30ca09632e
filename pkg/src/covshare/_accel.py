"""Numba switch.

Set ``COVSHARE_DISABLE_NUMBA=1`` to force the pure-numpy kernels.  The flag is
read once at import time.
"""

import os

_DISABLED = os.environ.get("COVSHARE_DISABLE_NUMBA", "").strip().lower() in (
    "1",
    "true",
    "yes",
)

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba ships with the package deps
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def decorator(func):
            return func

        return decorator


USE_NUMBA = NUMBA_AVAILABLE and not _DISABLED


def backend():
    return "numba" if USE_NUMBA else "numpy"
