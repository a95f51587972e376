"""Backend selection for the numerical inner loops.

The compiled ``_ckernels`` extension is used when importable; otherwise,
or when the ``IONBELL_PURE_PYTHON`` environment variable is set to a
non-empty value, the numpy implementation in ``_pykernels`` is used.
"""
import os

from . import _pykernels as python_backend

if os.environ.get("IONBELL_PURE_PYTHON"):
    _impl = python_backend
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = python_backend
        BACKEND = "python"
    else:
        BACKEND = "cython"

SHAPE_CODES = {"square": 0, "shaped": 1}

envelope_samples = _impl.envelope_samples
trapezoid_loop = _impl.trapezoid_loop
propagate_ladder = _impl.propagate_ladder


def compiled_backend():
    """The compiled module, or None when it is not available."""
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels
