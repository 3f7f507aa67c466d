"""Kernel backend selection.

The simulator routes every amplitude update through `impl`, which is either
the numba-jitted kernel module or the pure-NumPy fallback. Selection order:

  1. the QGNOISE_BACKEND environment variable ("numba" or "numpy"),
  2. otherwise numba when it imports, NumPy fallback when it does not.

`select()` swaps the active module at runtime (used by tests and benchmarks).
"""

from __future__ import annotations

import os

from . import _kernels_numpy

ENV_VAR = "QGNOISE_BACKEND"

impl = _kernels_numpy
name = "numpy"


def _load_numba_kernels():
    from . import _kernels_numba

    return _kernels_numba


def select(which: str = "auto") -> str:
    """Activate a kernel backend; returns the name actually selected."""
    global impl, name
    if which not in ("auto", "numba", "numpy"):
        raise ValueError(f"unknown backend {which!r}; expected auto, numba, or numpy")
    if which == "numpy":
        impl, name = _kernels_numpy, "numpy"
        return name
    try:
        impl, name = _load_numba_kernels(), "numba"
    except ImportError:
        if which == "numba":
            raise
        impl, name = _kernels_numpy, "numpy"
    return name


select(os.environ.get(ENV_VAR, "auto"))
