"""Heat-bath sweep kernels: compiled extension with pure-Python fallback.

Set HARDWALL_PURE_PYTHON=1 to force the fallback. Both backends produce
bit-identical fields for identical inputs.
"""

import os

if os.environ.get("HARDWALL_PURE_PYTHON"):
    from .fallback import sweep_parity
    BACKEND = "python"
else:
    try:
        from ._sweep import sweep_parity
        BACKEND = "compiled"
    except ImportError:
        from .fallback import sweep_parity
        BACKEND = "python"

__all__ = ["sweep_parity", "BACKEND"]
