"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback is used.  Setting ``FOGOFFLOAD_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("FOGOFFLOAD_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"

ucb_scores = _impl.ucb_scores
discount_merge = _impl.discount_merge
realize_slot = _impl.realize_slot
evolve_queues = _impl.evolve_queues

__all__ = ["BACKEND", "ucb_scores", "discount_merge", "realize_slot", "evolve_queues"]
