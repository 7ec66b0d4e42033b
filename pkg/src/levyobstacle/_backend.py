"""Kernel backend selection.

Hot loops are written twice: a numba ``@njit`` version and a vectorised
numpy version.  ``LEVYOBSTACLE_BACKEND=numpy`` (or a missing numba install)
selects the numpy path; anything else uses numba.
"""
import os

try:
    import numba
    from numba import njit as _njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None
    HAS_NUMBA = False

_ENV_FLAG = "LEVYOBSTACLE_BACKEND"
_backend = "numpy" if (os.environ.get(_ENV_FLAG, "numba").lower() == "numpy"
                       or not HAS_NUMBA) else "numba"


def njit(*args, **kwargs):
    """``numba.njit`` with caching on; identity decorator without numba."""
    kwargs.setdefault("cache", True)
    if not HAS_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return _njit(*args, **kwargs)


def get_backend():
    return _backend


def set_backend(name):
    """Switch backend at runtime (used by the benchmark and the tests)."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


def use_numba():
    return _backend == "numba"

