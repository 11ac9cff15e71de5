"""Hot inner loops: hash-grid gather/scatter and packed volume weights.

The active backend is chosen once at import from ``VFR_KERNELS`` (see
``vfr._jit``). Both backends stay importable through :func:`backend` so they
can be compared against each other.
"""

from .. import _jit
from . import _numpy

if _jit.HAVE_NUMBA:
    from . import _numba
else:  # pragma: no cover
    _numba = None

BACKEND = "numba" if _jit.USE_NUMBA else "numpy"
_active = _numba if _jit.USE_NUMBA else _numpy


def backend(name=None):
    """Return the kernel module for ``name`` ("numba"/"numpy"), default active."""
    if name is None:
        return _active
    if name == "numpy":
        return _numpy
    if name == "numba":
        if _numba is None:
            raise ImportError("numba backend requested but numba is not installed")
        return _numba
    raise ValueError(f"unknown kernel backend {name!r}")


grid_encode = _active.grid_encode
grid_scatter = _active.grid_scatter
volume_weights = _active.volume_weights
volume_weights_backward = _active.volume_weights_backward
segment_weighted_sum = _active.segment_weighted_sum
gelu = _active.gelu
