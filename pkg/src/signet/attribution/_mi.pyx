# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for mutual-information statistics.

Same contract as ``_mi_py``; the exact expected-MI sum is the hot loop
(O(R*C*N) hypergeometric terms), which is why it lives in C.
"""

from libc.math cimport exp, lgamma, log

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"

cdef double _LN2 = log(2.0)


def entropy_bits(marginal):
    cdef cnp.int64_t[::1] m = np.ascontiguousarray(marginal, dtype=np.int64)
    cdef Py_ssize_t i
    cdef double total = 0.0, h = 0.0, p
    for i in range(m.shape[0]):
        total += m[i]
    if total <= 0:
        return 0.0
    for i in range(m.shape[0]):
        if m[i] > 0:
            p = m[i] / total
            h -= p * log(p)
    return h / _LN2


def mi_bits(counts):
    cdef cnp.int64_t[:, ::1] c = np.ascontiguousarray(counts, dtype=np.int64)
    cdef Py_ssize_t rows = c.shape[0], cols = c.shape[1], i, j
    cdef double total = 0.0, mi = 0.0, nij
    cdef double[::1] a = np.zeros(rows, dtype=np.float64)
    cdef double[::1] b = np.zeros(cols, dtype=np.float64)
    for i in range(rows):
        for j in range(cols):
            a[i] += c[i, j]
            b[j] += c[i, j]
            total += c[i, j]
    if total <= 0:
        return 0.0
    for i in range(rows):
        for j in range(cols):
            if c[i, j] > 0:
                nij = c[i, j]
                mi += (nij / total) * log(nij * total / (a[i] * b[j]))
    return mi / _LN2


def expected_mi_bits(a, b, n_total):
    """Exact E[MI] under the fixed-marginal hypergeometric null, in bits."""
    cdef cnp.int64_t[::1] av = np.ascontiguousarray(a, dtype=np.int64)
    cdef cnp.int64_t[::1] bv = np.ascontiguousarray(b, dtype=np.int64)
    cdef long long n = n_total
    if n <= 0:
        return 0.0
    cdef cnp.ndarray[cnp.float64_t, ndim=1] gln_arr = np.zeros(n + 1, dtype=np.float64)
    cdef double[::1] gln = gln_arr
    cdef long long k
    for k in range(n + 1):
        gln[k] = lgamma(k + 1.0)
    cdef Py_ssize_t i, j
    cdef long long ai, bj, nij, start, end
    cdef double emi = 0.0, log_n = log(<double> n), term, log_pmf, outer
    for i in range(av.shape[0]):
        ai = av[i]
        if ai == 0:
            continue
        for j in range(bv.shape[0]):
            bj = bv[j]
            if bj == 0:
                continue
            start = ai + bj - n
            if start < 1:
                start = 1
            end = ai if ai < bj else bj
            outer = gln[ai] + gln[bj] + gln[n - ai] + gln[n - bj] - gln[n]
            for nij in range(start, end + 1):
                term = (<double> nij / <double> n) * (
                    log(<double> nij) + log_n - log(<double> ai * <double> bj)
                )
                log_pmf = (
                    outer
                    - gln[nij]
                    - gln[ai - nij]
                    - gln[bj - nij]
                    - gln[n - ai - bj + nij]
                )
                emi += term * exp(log_pmf)
    return emi / _LN2
