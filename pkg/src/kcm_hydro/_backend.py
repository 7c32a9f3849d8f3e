"""Kernel backend selection.

The compiled extension is used when importable; setting
``KCM_HYDRO_PURE_PYTHON=1`` forces the pure-Python fallback.
"""

import os

from . import _kernels_py

if os.environ.get("KCM_HYDRO_PURE_PYTHON", "") not in ("", "0"):
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels
    except ImportError:  # extension not built
        kernels = _kernels_py

BACKEND = kernels.NAME
