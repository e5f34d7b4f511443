"""Grid kernels with a compiled backend and a NumPy fallback.

The compiled extension is used when it imports and the environment
variable ``CLAMSENSE_PURE_PYTHON`` is unset or ``0``.  ``BACKEND`` names
the active implementation.
"""
from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("CLAMSENSE_PURE_PYTHON", "0") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

steered_norms = _impl.steered_norms
local_maxima_8 = _impl.local_maxima_8

__all__ = ["BACKEND", "steered_norms", "local_maxima_8"]
