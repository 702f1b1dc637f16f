"""Kernel backend selection.

The compiled Cython backend is preferred when its extension built;
otherwise the pure-Python twin takes over. Set ``REPLAYBENCH_PURE=1``
to force the pure backend (useful for debugging and benchmarking).
Both backends are bit-for-bit interchangeable.
"""

from __future__ import annotations

import os

if os.environ.get("REPLAYBENCH_PURE"):
    from . import _pure as _impl

    BACKEND = "pure"
else:
    try:
        from . import _fast as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        from . import _pure as _impl  # type: ignore[no-redef]

        BACKEND = "pure"

iou_matrix = _impl.iou_matrix
greedy_assign = _impl.greedy_assign
nms_keep = _impl.nms_keep


def backend_name() -> str:
    """Which kernel backend is active: 'compiled' or 'pure'."""
    return BACKEND
