"""Kernel backend selection.

The hot assembly kernel exists twice: a compiled Cython extension
(`cosplast.backends._core`) and a pure-numpy fallback with identical
semantics.  The compiled backend is preferred when importable; set
``COSPLAST_BACKEND=numpy`` or ``COSPLAST_BACKEND=compiled`` to force one.
"""

from __future__ import annotations

import os

from . import numpy_backend
from .numpy_backend import (VARIANT_EULER, VARIANT_FULL, VARIANT_SIMPLIFIED)

try:
    from . import _core as compiled_backend
    HAVE_COMPILED = True
except ImportError:  # extension not built; numpy fallback stays available
    compiled_backend = None
    HAVE_COMPILED = False


def get_backend(name=None):
    """Return the kernel module for `name` (or the environment default)."""
    if name is None:
        name = os.environ.get("COSPLAST_BACKEND", "auto")
    if name == "numpy":
        return numpy_backend
    if name == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled backend requested but not built")
        return compiled_backend
    if name == "auto":
        return compiled_backend if HAVE_COMPILED else numpy_backend
    raise ValueError(f"unknown backend {name!r}")


def backend_name(module=None):
    mod = module or get_backend()
    return "compiled" if mod is compiled_backend and HAVE_COMPILED else "numpy"
