"""Detect, quantify, and mitigate subgroup-conditional label bias in
binary segmentation, without clean ground truth.

Hot kernels run through a compiled extension when available and fall back
to numpy otherwise; ``backend_name()`` reports which one is active.
"""

from ._backend import BACKEND_NAME, available_backends

__version__ = "0.1.0"


def backend_name() -> str:
    return BACKEND_NAME


__all__ = ["backend_name", "available_backends", "__version__"]
