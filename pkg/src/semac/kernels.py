"""Kernel dispatch: compiled extension when available, numpy otherwise.

Set ``SEMAC_PURE_PYTHON=1`` to force the fallback.  ``BACKEND`` names the
active implementation.
"""
from __future__ import annotations

import os

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("SEMAC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "cython"

nearest_index = _impl.nearest_index
pair_scan = _impl.pair_scan
class_max_gap = _impl.class_max_gap

__all__ = ["BACKEND", "nearest_index", "pair_scan", "class_max_gap"]
