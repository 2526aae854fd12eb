"""Kernel backend selection.

The compiled Cython backend is preferred when importable; AUGFLOW_PURE_PYTHON=1
forces the NumPy fallback. Both expose the same functions (see
``augflow._kernels_py`` for the reference semantics), so everything above this
layer is backend-agnostic. Per-run determinism holds within a backend; the two
backends may differ in the last floating-point ulp on reductions, so rerun
comparisons should pin the backend.
"""

from __future__ import annotations

import os

if os.environ.get("AUGFLOW_PURE_PYTHON"):
    from augflow import _kernels_py as kernels
else:
    try:
        from augflow import _kernels_c as kernels  # type: ignore[no-redef]
    except ImportError:
        from augflow import _kernels_py as kernels  # type: ignore[no-redef]


def backend_name() -> str:
    return kernels.BACKEND_NAME
