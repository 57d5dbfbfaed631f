"""Select the coordinate-descent kernel at import time.

The compiled extension is preferred; set ``SPARLOW_PURE_PYTHON=1`` to force
the NumPy fallback.
"""

import os

from . import _cd_fallback

python_cd_batch = _cd_fallback.cd_batch

try:
    if os.environ.get("SPARLOW_PURE_PYTHON", "").strip() not in ("", "0"):
        raise ImportError("pure-Python backend requested")
    from ._cd_kernel import cd_batch as compiled_cd_batch
except ImportError:
    compiled_cd_batch = None

if compiled_cd_batch is not None:
    BACKEND = "cython"
    cd_batch = compiled_cd_batch
else:
    BACKEND = "python"
    cd_batch = python_cd_batch


def get_cd_batch(name=None):
    """Return the kernel called ``name`` ("cython" or "python"), default the active one."""
    if name is None:
        return cd_batch
    if name == "python":
        return python_cd_batch
    if name == "cython":
        if compiled_cd_batch is None:
            raise ImportError("compiled kernel sparlow._cd_kernel is not built")
        return compiled_cd_batch
    raise ValueError(f"unknown backend {name!r}")
