"""Kernel backend selection: compiled extension when available, NumPy otherwise.

Set RTMCLOUD_PURE_PYTHON=1 to force the NumPy kernels (used by the
benchmark and for cross-checking the two implementations).
"""

import os

if os.environ.get("RTMCLOUD_PURE_PYTHON") == "1":
    from . import _stencil_py as impl

    BACKEND = "python"
else:
    try:
        from . import _stencil as impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import _stencil_py as impl

        BACKEND = "python"


def backend_name() -> str:
    return BACKEND
