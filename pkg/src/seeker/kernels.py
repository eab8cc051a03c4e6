"""Kernel dispatch: compiled extension when available, numpy otherwise.

Set ``SEEKER_PURE_PY=1`` to force the numpy path (used by the benchmark
and by tests that compare the two implementations).
"""
from __future__ import annotations

import os

from seeker import _kernels_py

if os.environ.get("SEEKER_PURE_PY"):
    _impl = _kernels_py
    NATIVE = False
else:
    try:
        from seeker import _kernels as _impl  # type: ignore[no-redef]

        NATIVE = True
    except ImportError:
        _impl = _kernels_py
        NATIVE = False

assign_nearest = _impl.assign_nearest
rle_encode = _impl.rle_encode
rle_decode = _impl.rle_decode
