"""Hot-loop kernels: the compiled extension when built, else numpy/scipy.

Set ``CYCLEBATCH_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
quad_chain = _kernels_py.quad_chain

if os.environ.get("CYCLEBATCH_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        quad_chain = _kernels.quad_chain
        BACKEND = "compiled"

__all__ = ["BACKEND", "quad_chain"]
