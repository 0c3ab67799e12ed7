"""Backend selection for the hot kernels.

The compiled extension (``pemsim._kernels``) is used when it was built and
imports cleanly; otherwise the pure-Python twin in ``pemsim._kernels_py`` is
used. Set ``PEMSIM_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("PEMSIM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

sat_overlap = _impl.sat_overlap
polygon_distance = _impl.polygon_distance
markov_run = _impl.markov_run
project = _impl.project
corridor_scan = _impl.corridor_scan

__all__ = [
    "BACKEND",
    "sat_overlap",
    "polygon_distance",
    "markov_run",
    "project",
    "corridor_scan",
]
