"""Hot advection kernels with selectable backend.

The numba backend is the default; set ``BRINKFLOW_DISABLE_NUMBA`` to any
non-empty value to force the pure-numpy path.  Both produce bitwise
identical results (tested), so the switch is purely about speed.
"""

import os

if os.environ.get("BRINKFLOW_DISABLE_NUMBA"):
    from . import numpy_backend as backend
    BACKEND = "numpy"
else:
    try:
        from . import numba_backend as backend
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a hard dep, but be kind
        from . import numpy_backend as backend
        BACKEND = "numpy"

upwind_density = backend.upwind_density
advect_momentum = backend.advect_momentum
