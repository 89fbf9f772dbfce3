"""Hot loops for scenario reduction.

``BACKEND`` is ``"cython"`` when the compiled extension imported, otherwise
``"python"`` (NumPy).  Set ``GRIDPLAN_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("GRIDPLAN_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"

pairwise_distances = _impl.pairwise_distances
forward_select = _impl.forward_select

__all__ = ["BACKEND", "pairwise_distances", "forward_select"]
