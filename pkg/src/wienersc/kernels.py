"""Kernel dispatch between the compiled extension and the NumPy fallback.

Each kernel is taken from the compiled extension only where it beats the
vectorised NumPy version (see ``benchmarks/bench_kernels.py``); NumPy's SIMD
transcendental loops win on the elementwise maps and the grid chi^2.
Set ``WIENERSC_PURE_PYTHON=1`` to force the fallback everywhere.
"""

import os

from . import _kernels_py

# kernels whose compiled version measured faster than NumPy
COMPILED_KERNELS = frozenset({"profile_nll_grid"})

BACKEND = "python"
_compiled = None

if not os.environ.get("WIENERSC_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _compiled = None


def _pick(name: str):
    if _compiled is not None and name in COMPILED_KERNELS:
        return getattr(_compiled, name)
    return getattr(_kernels_py, name)


pipeline_forward = _pick("pipeline_forward")
pipeline_inverse = _pick("pipeline_inverse")
pipeline_log_jacobian = _pick("pipeline_log_jacobian")
profile_nll = _pick("profile_nll")
profile_nll_grid = _pick("profile_nll_grid")
grid_quadform = _pick("grid_quadform")

__all__ = [
    "BACKEND",
    "COMPILED_KERNELS",
    "pipeline_forward",
    "pipeline_inverse",
    "pipeline_log_jacobian",
    "profile_nll",
    "profile_nll_grid",
    "grid_quadform",
]
