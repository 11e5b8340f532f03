"""Hot loops of the sinusoid fitter: periodogram scan and Levenberg-Marquardt.

The compiled extension ``_core`` is used when it was built; otherwise the numpy
twin in ``_pycore`` is loaded. Set ``RABITOMO_PURE_PYTHON=1`` to force the
fallback.
"""
import os

from . import _pycore

BACKEND = "python"
_impl = _pycore

if os.environ.get("RABITOMO_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pycore

periodogram = _impl.periodogram
lm_fit = _impl.lm_fit
jacobian = _pycore.jacobian
model = _pycore.model

STATUS_DEGENERATE = _pycore.STATUS_DEGENERATE
STATUS_MAXITER = _pycore.STATUS_MAXITER
STATUS_STALLED = _pycore.STATUS_STALLED


def backends():
    """Map of every importable backend name to its module."""
    found = {"python": _pycore}
    try:
        from . import _core

        found["cython"] = _core
    except ImportError:
        pass
    return found
