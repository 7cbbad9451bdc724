"""Numba/NumPy backend selection for the hot kernels.

The environment variable ``TRIPLETWB_NO_NUMBA`` (any non-empty value)
forces the pure-NumPy fallback even when numba is importable. The active
backend is fixed at import time; ``benchmarks/bench_backends.py`` times
both paths.
"""
from __future__ import annotations

import os

_DISABLED = bool(os.environ.get("TRIPLETWB_NO_NUMBA"))

try:  # pragma: no cover - exercised via both CI lanes
    if _DISABLED:
        raise ImportError("numba disabled by TRIPLETWB_NO_NUMBA")
    from numba import njit  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore[misc]
        """No-op replacement so jitted sources stay importable."""
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


def backend_name() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
