"""Backend selection for the hot loops.

The Cython extension is used when it was built; otherwise the numpy
implementations are used.  Setting ``SELFSTEER_PURE_PYTHON=1`` forces the
numpy path, which the benchmark and the cross-backend tests rely on.
"""

import os

from . import _kernels_py as python

compiled = None
if os.environ.get("SELFSTEER_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled
    except ImportError:
        compiled = None

_active = compiled if compiled is not None else python
BACKEND = "cython" if compiled is not None else "python"

das_powers = _active.das_powers
systematic_indices = _active.systematic_indices
fractional_delay = _active.fractional_delay
