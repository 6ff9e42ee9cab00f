"""Kernel dispatch: compiled Cython core when built, numpy fallback otherwise.

Set ``PLRSOH_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("PLRSOH_PURE_PYTHON"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

occupancy = _impl.occupancy
smooth_density = _impl.smooth_density
PAIRS = _kernels_py.PAIRS

__all__ = ["BACKEND", "PAIRS", "occupancy", "smooth_density"]
