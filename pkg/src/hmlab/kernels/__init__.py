"""Flow kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it was built; setting the environment
variable ``HMLAB_PURE_PYTHON=1`` forces the fallback.
"""

import os

from hmlab.kernels import _reference

reference = _reference

compiled = None
if os.environ.get("HMLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from hmlab.kernels import _flowcore as compiled
    except ImportError:  # extension not built
        compiled = None

backend = compiled if compiled is not None else _reference
BACKEND = "compiled" if compiled is not None else "python"

residual_rows = backend.residual_rows
flow_steps = backend.flow_steps
rk4_path = backend.rk4_path

__all__ = ["BACKEND", "compiled", "reference", "residual_rows", "flow_steps", "rk4_path"]
