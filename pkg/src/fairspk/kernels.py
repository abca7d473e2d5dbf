"""Hot loops (threshold sweeps, the Adam update), compiled when available.

The Cython extension is preferred; set ``FAIRSPK_PURE_PYTHON=1`` to force
the numpy implementation. ``BACKEND`` names the one in use.
"""

import os

from . import _kernels_py

if os.environ.get("FAIRSPK_PURE_PYTHON"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

count_at_or_above = _impl.count_at_or_above
eer_sweep = _impl.eer_sweep
adam_update = _impl.adam_update

__all__ = ["BACKEND", "adam_update", "count_at_or_above", "eer_sweep"]
