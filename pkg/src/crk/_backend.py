"""Selects the quantile-regression kernel at import time.

The compiled Cython kernel is preferred; the pure Python twin is used
when the extension is missing (source install without a C toolchain) or
when ``CRK_PURE_PYTHON=1`` is set, which the benchmark and the parity
tests rely on.
"""

import os

import numpy as np

if os.environ.get("CRK_PURE_PYTHON", "0") not in ("", "0"):
    from . import _qrpath_py as _kernel

    BACKEND = "python"
else:
    try:
        from . import _qrpath as _kernel  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _qrpath_py as _kernel

        BACKEND = "python"


def backend() -> str:
    """Name of the active quantile-regression kernel."""
    return BACKEND


def qr_path(y, X, taus):
    """Coefficient matrix (len(taus) x p) of exact quantile regressions."""
    y = np.ascontiguousarray(y, dtype=np.float64)
    X = np.ascontiguousarray(X, dtype=np.float64)
    taus = np.ascontiguousarray(taus, dtype=np.float64)
    out = np.empty((taus.shape[0], X.shape[1]), dtype=np.float64)
    _kernel.qr_path_into(y, X, taus, out)
    return out
