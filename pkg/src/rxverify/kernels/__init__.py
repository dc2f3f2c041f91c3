"""Hot inner loops, compiled when available.

The Cython extension ``_ckernels`` is used when it was built; otherwise the
numpy module ``_pykernels`` is used. Set ``RXVERIFY_PURE_PYTHON=1`` to force
the fallback. ``BACKEND`` names the active implementation.
"""

import os

from . import _pykernels as python

try:
    if os.environ.get("RXVERIFY_PURE_PYTHON"):
        raise ImportError("pure-Python backend requested")
    from . import _ckernels as compiled
except ImportError:
    compiled = None

_impl = compiled if compiled is not None else python
BACKEND = "cython" if compiled is not None else "python"

maxlog_llr = _impl.maxlog_llr
bin_counts = _impl.bin_counts
im2col = _impl.im2col
col2im = _impl.col2im
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward
knn_votes = _impl.knn_votes

__all__ = [
    "BACKEND",
    "bin_counts",
    "col2im",
    "compiled",
    "im2col",
    "knn_votes",
    "maxlog_llr",
    "maxpool_backward",
    "maxpool_forward",
    "python",
]
