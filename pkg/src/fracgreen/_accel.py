"""Backend switch for the compiled hot loops.

Set ``FRACGREEN_BACKEND=numpy`` (or ``FRACGREEN_DISABLE_NUMBA=1``) before
import to run the vectorised numpy implementations instead of the numba
kernels.  Both backends are always importable so the benchmark can time
them side by side.
"""

from __future__ import annotations

import os

try:
    import numba as _numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None
    HAS_NUMBA = False


def _env_backend() -> str:
    if os.environ.get("FRACGREEN_DISABLE_NUMBA", "").strip() not in ("", "0"):
        return "numpy"
    choice = os.environ.get("FRACGREEN_BACKEND", "numba").strip().lower()
    if choice not in ("numba", "numpy"):
        raise ValueError(f"FRACGREEN_BACKEND must be 'numba' or 'numpy', got {choice!r}")
    return choice if HAS_NUMBA else "numpy"


BACKEND = _env_backend()
USE_NUMBA = BACKEND == "numba"


def njit(*args, **kwargs):
    """``numba.njit`` with caching, or a no-op when numba is missing."""
    kwargs.setdefault("cache", True)
    kwargs.setdefault("error_model", "numpy")
    if HAS_NUMBA:
        return _numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda f: f


def pick(numba_impl, numpy_impl):
    """Return the implementation matching the active backend."""
    return numba_impl if USE_NUMBA else numpy_impl


def set_num_threads_from_env() -> None:
    """Honour ``FRACGREEN_NUM_THREADS`` for numba's thread pool."""
    value = os.environ.get("FRACGREEN_NUM_THREADS")
    if value and HAS_NUMBA:
        _numba.set_num_threads(max(1, min(int(value), _numba.config.NUMBA_NUM_THREADS)))
