"""Backend selection for the hot elementwise kernels.

The FFTs always go through numpy (pocketfft); everything around them —
fused products, norm reductions, exponential-integrator updates, Hermitian
noise scatter — has a numba implementation and a pure-numpy fallback.
Select with TFLAB_BACKEND=numba|numpy|auto (default auto: numba when
importable). Results are identical between backends up to floating-point
summation order; a single backend is bit-reproducible.
"""

import os

_choice = os.environ.get("TFLAB_BACKEND", "auto").lower()
if _choice not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        f"TFLAB_BACKEND must be one of auto|numba|numpy, got {_choice!r}"
    )

if _choice == "numpy":
    from . import numpy_ops as ops
else:
    try:
        from . import numba_ops as ops
    except ImportError:
        if _choice == "numba":
            raise
        from . import numpy_ops as ops

BACKEND = ops.NAME
