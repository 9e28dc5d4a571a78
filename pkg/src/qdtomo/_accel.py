"""Optional numba acceleration.

Set ``QDTOMO_DISABLE_NUMBA=1`` to force the pure-numpy code paths, e.g. for
debugging or on platforms without a working numba build.
"""

import os

_disabled = os.environ.get("QDTOMO_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError("numba disabled by QDTOMO_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        """No-op stand-in so decorated functions still import."""
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
