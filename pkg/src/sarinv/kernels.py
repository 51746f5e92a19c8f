"""Render kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
implementation is imported. Set ``SARINV_PURE_PYTHON=1`` to force the
fallback.
"""

import os

from . import _pykernels

BACKEND = "python"

if os.environ.get("SARINV_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
else:
    _impl = _pykernels

rasterize_min_depth = _impl.rasterize_min_depth
deposit = _impl.deposit
image_span = _impl.image_span

__all__ = ["BACKEND", "rasterize_min_depth", "deposit", "image_span"]
