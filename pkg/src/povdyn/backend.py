"""Kernel backend selection.

The compiled extension is preferred when importable; the NumPy fallback is
used otherwise. ``POVDYN_BACKEND=python`` forces the fallback (useful for
benchmarking and for reproducing issues in pure Python).
"""

import os

if os.environ.get("POVDYN_BACKEND", "").strip().lower() == "python":
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        from . import _kernels_py as kernels  # type: ignore[no-redef]


def backend_name() -> str:
    """Name of the active kernel backend: 'compiled' or 'python'."""
    return kernels.BACKEND
