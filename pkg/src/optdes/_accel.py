"""Backend selection for the compiled kernels.

Set ``OPTDES_DISABLE_NUMBA=1`` to force the pure-numpy path.
"""

import os

_DISABLED = os.environ.get("OPTDES_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise.

    Compilation happens even when the numpy path is selected so both
    backends stay importable side by side (tests and benchmarks compare them).
    """
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]):
        return args[0]

    def wrap(f):
        return f

    return wrap


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
