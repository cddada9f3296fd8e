"""Select the compiled kernels when available, else the numpy fallback.

Set ``BLINDLMMSE_BACKEND=python`` to force the fallback.
"""

import os

from . import _kernels_py

_forced = os.environ.get("BLINDLMMSE_BACKEND", "").strip().lower()

if _forced == "python":
    kernels = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
        BACKEND = "compiled"
    except ImportError:
        if _forced == "compiled":
            raise
        kernels = _kernels_py
        BACKEND = "python"


def available_backends():
    """Names of the kernel modules importable in this environment."""
    names = ["python"]
    try:
        from . import _kernels  # noqa: F401
        names.insert(0, "compiled")
    except ImportError:
        pass
    return names


def get_kernels(name=None):
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
