"""Numba switch for the simulation kernels.

Kernels are written in the numba-compatible subset of Python.  With numba
available they are compiled with ``njit``; setting ``ZRP_DISABLE_NUMBA=1``
leaves them as plain Python over numpy arrays, and the batch samplers switch
to their vectorised numpy implementations.
"""

from __future__ import annotations

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_FALSY = {"", "0", "false", "no", "off"}


def _disabled_by_env() -> bool:
    return os.environ.get("ZRP_DISABLE_NUMBA", "").strip().lower() not in _FALSY


NUMBA_ENABLED = numba is not None and not _disabled_by_env()


def kernel(fn):
    """Compile ``fn`` with numba unless disabled; the original stays on ``.py_func``."""
    if not NUMBA_ENABLED:
        fn.py_func = fn
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def default_backend() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


def check_backend(backend: str | None) -> str:
    backend = default_backend() if backend is None else backend
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}; expected 'numba' or 'numpy'")
    if backend == "numba" and not NUMBA_ENABLED:
        raise ValueError("numba backend requested but numba is disabled or missing")
    return backend
