"""Kernel dispatch: the compiled extension when it is importable, the numpy
fallback otherwise. Set ``LANEALLOC_PURE_PYTHON=1`` to force the fallback."""

import os

from . import _kernels_py

BACKEND = "python"
link_response = _kernels_py.link_response
dual_sweep = _kernels_py.dual_sweep

if os.environ.get("LANEALLOC_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _kernels as _kernels_c
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        link_response = _kernels_c.link_response
        dual_sweep = _kernels_c.dual_sweep
