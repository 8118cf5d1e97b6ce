"""Kernel backend selection.

The hot numerical loops ship in two interchangeable implementations: a
numba-compiled one and a pure-numpy one. Both perform the same elementary
floating-point operations in the same order, so their results agree bitwise.
The active backend is chosen once at import time from the DRILMPC_BACKEND
environment variable (``numba`` or ``numpy``, default ``numba``); when numba
is requested but cannot be imported the numpy path is used silently.
"""

from __future__ import annotations

import os

ENV_VAR = "DRILMPC_BACKEND"
VALID_BACKENDS = ("numba", "numpy")


def requested_backend() -> str:
    """Backend name requested via the environment, defaulting to numba."""
    name = os.environ.get(ENV_VAR, "numba").strip().lower()
    if name not in VALID_BACKENDS:
        raise ValueError(f"{ENV_VAR} must be one of {VALID_BACKENDS}, got {name!r}")
    return name


def resolve_backend() -> str:
    """Backend actually used: the requested one, or numpy if numba is absent."""
    name = requested_backend()
    if name == "numba":
        try:
            import numba  # noqa: F401
        except ImportError:
            return "numpy"
    return name
