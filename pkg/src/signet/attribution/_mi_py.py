"""NumPy reference kernels for mutual-information statistics.

Mirrors the compiled extension exactly; selected automatically when the
extension is unavailable (or forced via SIGNET_PURE_PYTHON=1).
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"

_LN2 = math.log(2.0)


def _log_factorials(n: int) -> np.ndarray:
    """log(k!) for k in 0..n; lgamma keeps both backends bit-consistent."""
    return np.array([math.lgamma(k + 1.0) for k in range(n + 1)], dtype=np.float64)


def entropy_bits(marginal: np.ndarray) -> float:
    counts = np.asarray(marginal, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum())


def mi_bits(counts: np.ndarray) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        return 0.0
    pxy = counts / total
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    mask = pxy > 0
    ratio = np.where(mask, pxy / (px @ py), 1.0)
    return float((pxy[mask] * np.log2(ratio[mask])).sum())


def expected_mi_bits(a: np.ndarray, b: np.ndarray, n_total: int) -> float:
    """Exact E[MI] over the fixed-marginal hypergeometric null, in bits.

    For each cell (i, j) the count n_ij ranges over the feasible window
    [max(1, a_i + b_j - N), min(a_i, b_j)] and contributes
    (n_ij/N) * log(N n_ij / (a_i b_j)) weighted by the hypergeometric
    probability of n_ij given the marginals.
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    n = int(n_total)
    if n <= 0:
        return 0.0
    gln = _log_factorials(n)
    log_n = np.log(float(n))
    emi = 0.0
    for ai in a.tolist():
        if ai == 0:
            continue
        for bj in b.tolist():
            if bj == 0:
                continue
            start = max(1, ai + bj - n)
            end = min(ai, bj)
            if end < start:
                continue
            nij = np.arange(start, end + 1, dtype=np.float64)
            term = (nij / n) * (np.log(nij) + log_n - np.log(float(ai) * float(bj)))
            log_pmf = (
                gln[ai]
                + gln[bj]
                + gln[n - ai]
                + gln[n - bj]
                - gln[n]
                - gln[start : end + 1]
                - gln[ai - end : ai - start + 1][::-1]
                - gln[bj - end : bj - start + 1][::-1]
                - gln[n - ai - bj + start : n - ai - bj + end + 1]
            )
            emi += float((term * np.exp(log_pmf)).sum())
    return emi / _LN2
