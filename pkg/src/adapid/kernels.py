"""Kernel backend selection.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy fallback in ``_kernels_py``. Setting ``ADAPID_PURE_PYTHON=1`` forces the
fallback.
"""
import os

from . import _kernels_py

if os.environ.get("ADAPID_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"

POWER = _kernels_py.POWER
HUBER = _kernels_py.HUBER

loss_values = _impl.loss_values
loss_derivatives = _impl.loss_derivatives
data_term = _impl.data_term
data_values = _impl.data_values
forgetting_scan = _impl.forgetting_scan
sliding_sums = _impl.sliding_sums


def backends():
    """Mapping of available backend name -> module."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        out["cython"] = _kernels
    return out
