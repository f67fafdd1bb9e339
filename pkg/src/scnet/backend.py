"""Kernel backend selection.

The compiled extension is preferred when present; SCNET_BACKEND=numpy or
SCNET_BACKEND=cython forces one side (the latter fails loudly if the
extension was never built). Selection happens once, at import.
"""

import os

from . import _kernels_py

_choice = os.environ.get("SCNET_BACKEND", "auto").lower()

if _choice not in ("auto", "cython", "numpy"):
    raise ValueError(f"SCNET_BACKEND must be auto, cython or numpy, "
                     f"got {_choice!r}")

if _choice == "numpy":
    _impl = _kernels_py
    BACKEND = "numpy"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        if _choice == "cython":
            raise ImportError(
                "SCNET_BACKEND=cython but the scnet._kernels extension is "
                "not built; run pip install -e . --no-build-isolation")
        _impl = _kernels_py
        BACKEND = "numpy"

im2col = _impl.im2col
col2im = _impl.col2im
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward


def get_backends():
    """All importable backends, for equivalence tests and benchmarks."""
    found = {"numpy": _kernels_py}
    try:
        from . import _kernels
        found["cython"] = _kernels
    except ImportError:
        pass
    return found
