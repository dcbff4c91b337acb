"""Backend selection for the simulation kernel.

The compiled extension is used when it imports; otherwise the numpy version.
Set ``DUIO_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernel

BACKEND = "python"
integrate = _pykernel.integrate

if not os.environ.get("DUIO_PURE_PYTHON"):
    try:
        from . import _ckernel
    except ImportError:  # extension not built
        _ckernel = None
    else:
        integrate = _ckernel.integrate
        BACKEND = "cython"
else:
    _ckernel = None


def backends():
    """Available integrators keyed by name."""
    out = {"python": _pykernel.integrate}
    if _ckernel is not None:
        out["cython"] = _ckernel.integrate
    return out
