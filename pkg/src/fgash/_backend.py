"""Kernel backend switch.

Hot loops are compiled with numba when it is importable. Setting
``FGASH_BACKEND=numpy`` selects the vectorised numpy path instead, which runs
every trajectory of an ensemble in lock-step as array operations.
"""
import os

BACKEND = os.environ.get("FGASH_BACKEND", "numba").strip().lower()
if BACKEND not in ("numba", "numpy"):
    raise ImportError(f"FGASH_BACKEND must be 'numba' or 'numpy', got {BACKEND!r}")

if BACKEND == "numba":
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a declared dependency
        BACKEND = "numpy"

USE_NUMBA = BACKEND == "numba"


def jit(fn=None, **options):
    """``numba.njit`` on the numba backend, identity otherwise."""
    options.setdefault("cache", True)

    def wrap(f):
        if USE_NUMBA:
            return numba.njit(**options)(f)
        return f

    if fn is None:
        return wrap
    return wrap(fn)


if USE_NUMBA:
    prange = numba.prange
else:
    prange = range
