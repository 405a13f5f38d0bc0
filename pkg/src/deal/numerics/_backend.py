"""Select the Jacobi kernel at import time.

The compiled extension is preferred; set ``DEAL_PURE_PYTHON=1`` to force the
fallback (used by the benchmark and by the cross-backend tests).
"""
import os

from . import _jacobi_py

python_jacobi_sweeps = _jacobi_py.jacobi_sweeps

try:
    from ._jacobi import jacobi_sweeps as compiled_jacobi_sweeps
except ImportError:  # extension not built
    compiled_jacobi_sweeps = None

if compiled_jacobi_sweeps is not None and os.environ.get("DEAL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    jacobi_sweeps = compiled_jacobi_sweeps
    BACKEND = "compiled"
else:
    jacobi_sweeps = python_jacobi_sweeps
    BACKEND = "python"
