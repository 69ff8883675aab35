"""Backend selection for the trajectory-stepping kernel.

The compiled extension is used when it imports; otherwise the numpy
implementation is used.  Setting ``MSSTAB_KERNEL=python`` forces the
fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
advance_block = _kernels_py.advance_block

if os.environ.get("MSSTAB_KERNEL", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        advance_block = _compiled.advance_block


def get_kernel(name: str | None = None):
    """``advance_block`` for ``name`` in ``{"cython", "python"}`` (default: selected)."""
    if name is None:
        return advance_block
    if name == "python":
        return _kernels_py.advance_block
    if name == "cython":
        from . import _kernels
        return _kernels.advance_block
    raise ValueError(f"unknown kernel backend {name!r}")
