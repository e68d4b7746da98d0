"""Kernel backend selection.

The compiled extension is preferred. Set ``ATTOP_BACKEND=python`` to force the
numpy fallback (useful for benchmarking and for environments without a C
compiler).
"""

import os

from . import _fallback

NAME = "python"
kernels = _fallback

if os.environ.get("ATTOP_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        kernels = _compiled
        NAME = "cython"


def get(name=None):
    """Return the kernel module for ``name`` ("cython"/"python"), default active."""
    if name is None:
        return kernels
    if name == "python":
        return _fallback
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
