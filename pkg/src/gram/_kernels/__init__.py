"""Hot-kernel backend selection.

The compiled Cython extension is used when it imported cleanly; otherwise
the numpy reference implementations take over.  Set GRAM_NO_EXT=1 to force
the fallback (the benchmark uses this to compare the two).
"""

import os

from . import reference
from .reference import SINC_TAPS, selective_scan_chunked  # noqa: F401

_IMPL = reference
_BACKEND = "python"

if not os.environ.get("GRAM_NO_EXT"):
    try:
        from . import _cykernels as _ext

        _IMPL = _ext
        _BACKEND = "cython"
    except ImportError:
        pass


def backend_name() -> str:
    return _BACKEND


place_taps = _IMPL.place_taps
selective_scan_fwd = _IMPL.selective_scan_fwd
selective_scan_bwd = _IMPL.selective_scan_bwd
