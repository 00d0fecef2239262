"""Backend selection for the hot kernels.

The compiled ``_ckernels`` extension is used when it was built; otherwise the
numpy fallback in ``_kernels_py`` is loaded.  Set ``OIMLAB_PURE=1`` to force
the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("OIMLAB_PURE", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"

oim_loss_grad = _impl.oim_loss_grad
weighted_standardize = _impl.weighted_standardize
weighted_standardize_backward = _impl.weighted_standardize_backward
ema_update_rows = _impl.ema_update_rows


def available_backends():
    """Map backend name to kernel module for every backend importable here."""
    out = {"python": _kernels_py}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        out["cython"] = _ckernels
    return out
