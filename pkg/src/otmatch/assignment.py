"""Backend selection for the assignment kernel.

The compiled Cython kernel is used when available; set OTMATCH_PURE_PYTHON=1
to force the numpy fallback (the two are algorithmically identical).
"""

import os

from . import _lapjv_py

try:
    from . import _lapjv as _lapjv_ext
except ImportError:  # extension not built
    _lapjv_ext = None

if _lapjv_ext is not None and not os.environ.get("OTMATCH_PURE_PYTHON"):
    BACKEND = "cython"
    solve_lap = _lapjv_ext.solve_lap
else:
    BACKEND = "python"
    solve_lap = _lapjv_py.solve_lap


def available_backends():
    backends = {"python": _lapjv_py.solve_lap}
    if _lapjv_ext is not None:
        backends["cython"] = _lapjv_ext.solve_lap
    return backends
