"""Kernel backend selection.

The compiled extension is used when it imports cleanly; otherwise the
numpy fallback takes over. ``SEGBIAS_BACKEND=python`` or ``=compiled``
forces the choice (the latter raises if the extension is missing).
"""

import os

from . import _kernels_py

_forced = os.environ.get("SEGBIAS_BACKEND", "").strip().lower()
if _forced not in ("", "python", "compiled"):
    raise ImportError(f"SEGBIAS_BACKEND must be 'python' or 'compiled', got {_forced!r}")

if _forced == "python":
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        if _forced == "compiled":
            raise
        kernels = _kernels_py

BACKEND_NAME = kernels.BACKEND_NAME


def available_backends():
    """Names of the kernel implementations importable in this environment."""
    names = ["python"]
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        pass
    else:
        names.insert(0, "compiled")
    return names
