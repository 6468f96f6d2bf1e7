"""Backend selection for the inner maximisation kernel.

The compiled extension ``bidirelay._kernels`` is used when it was built;
otherwise the NumPy implementation in ``bidirelay._kernels_py``.  Setting the
environment variable ``BIDIRELAY_PURE=1`` forces the NumPy path.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

# Layout of the ``sums`` vector returned by ``inner_maximize``.
S_PROFIT = 0
S_DIRECT_A, S_DIRECT_B = 1, 2
S_B1_A, S_B1_B, S_B2_A, S_B2_B = 3, 4, 5, 6
S_C1_A, S_C1_B, S_C1_AB, S_C2_A, S_C2_B = 7, 8, 9, 10, 11
S_POWER_A, S_POWER_B, S_POWER_R = 12, 13, 14
N_SUMS = 15

_compiled = None
if os.environ.get("BIDIRELAY_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKENDS = {"python": _kernels_py.inner_maximize}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled.inner_maximize
DEFAULT_BACKEND = "compiled" if _compiled is not None else "python"


def role_mask(allowed, n: int) -> np.ndarray:
    """Broadcast a role mask to shape ``(n, 8)`` uint8.

    ``allowed`` is either a collection of role codes (applied to every
    subcarrier) or an ``(n, 8)`` boolean-like array.
    """
    arr = np.asarray(allowed)
    if arr.ndim == 2:
        if arr.shape != (n, 8):
            raise ValueError(f"per-subcarrier mask must have shape ({n}, 8), got {arr.shape}")
        return np.ascontiguousarray(arr, dtype=np.uint8)
    row = np.zeros(8, dtype=np.uint8)
    for code in arr.ravel().tolist():
        if 0 <= int(code) < 8:
            row[int(code)] = 1
    return np.broadcast_to(row, (n, 8))


def inner_maximize(gains: np.ndarray, dual: np.ndarray, weights, mask: np.ndarray,
                   backend: str | None = None, tol: float = 1e-12):
    """Run the selected backend; see ``_kernels_py.inner_maximize`` for the contract."""
    fn = BACKENDS[backend or DEFAULT_BACKEND]
    return fn(np.ascontiguousarray(gains, dtype=np.float64),
              np.ascontiguousarray(dual, dtype=np.float64),
              np.ascontiguousarray(weights, dtype=np.float64), mask, tol)
