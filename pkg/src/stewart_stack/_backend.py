"""Pick the compiled kernels when available, numpy otherwise.

Set ``STEWART_STACK_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

if os.environ.get("STEWART_STACK_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        from . import _kernels_py as kernels

BACKEND = kernels.BACKEND
forward_batch = kernels.forward_batch
leg_constraints = kernels.leg_constraints
