"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the pure-Python
module. Set ``SCHELLING_STABILITY_PURE=1`` to force the Python path.
"""
from __future__ import annotations

import os

from . import _pykernels

try:
    if os.environ.get("SCHELLING_STABILITY_PURE", "") not in ("", "0"):
        raise ImportError("pure-Python backend requested")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
KOFF = _pykernels.KOFF


def get(name: str | None = None):
    """Kernel module by name (``"cython"`` / ``"python"``); default is the active one."""
    if name is None:
        name = BACKEND
    if name == "python":
        return _pykernels
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def available() -> list[str]:
    return ["python"] + (["cython"] if _compiled is not None else [])
