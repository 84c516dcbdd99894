"""Kernel selection: the compiled extension if importable, else numpy.

Set ``PUFKEY_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback

NAME = "python"
_compiled = None

if not os.environ.get("PUFKEY_PURE_PYTHON"):
    try:
        from . import _scl as _compiled
        NAME = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _compiled = None


def scl(llr, mask, values, list_size):
    """Low-level entry: contiguous float64 LLRs, uint8 mask and values."""
    if _compiled is not None:
        return _compiled.scl_decode(llr, mask, values, list_size)
    return _fallback.scl_decode(llr, mask, values, list_size)
