"""Kernel selection: compiled extension when available, NumPy otherwise.

Set SIGNET_PURE_PYTHON=1 to force the NumPy path (useful for
benchmarking and for debugging suspected extension issues).
"""

from __future__ import annotations

import os

import numpy as np

from . import _mi_py

if os.environ.get("SIGNET_PURE_PYTHON", "").strip() not in ("", "0"):
    _impl = _mi_py
else:
    try:
        from . import _mi as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _mi_py

BACKEND: str = _impl.BACKEND

__all__ = ["BACKEND", "mi_bits", "expected_mi_bits", "entropy_bits", "backends"]


def _as_counts(counts) -> np.ndarray:
    arr = np.ascontiguousarray(counts, dtype=np.int64)
    if arr.ndim != 2:
        raise ValueError("counts must be a 2-D table")
    if (arr < 0).any():
        raise ValueError("counts must be non-negative")
    return arr


def mi_bits(counts) -> float:
    """Mutual information of a contingency table, in bits."""
    return float(_impl.mi_bits(_as_counts(counts)))


def expected_mi_bits(counts) -> float:
    """Exact expected MI under the fixed-marginal permutation null, in bits."""
    arr = _as_counts(counts)
    a = arr.sum(axis=1)
    b = arr.sum(axis=0)
    return float(_impl.expected_mi_bits(a, b, int(arr.sum())))


def entropy_bits(marginal) -> float:
    """Entropy of a count vector, in bits."""
    arr = np.ascontiguousarray(marginal, dtype=np.int64)
    if arr.ndim != 1 or (arr < 0).any():
        raise ValueError("marginal must be a 1-D non-negative vector")
    return float(_impl.entropy_bits(arr))


def backends() -> dict[str, object]:
    """Both kernel modules keyed by backend name, for cross-checks."""
    out = {"python": _mi_py}
    try:
        from . import _mi

        out["compiled"] = _mi
    except ImportError:
        pass
    return out
