# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pair-energy and occupation kernels (see ``_pykernels`` for the reference)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, pow, fabs

cnp.import_array()

cdef enum:
    RIESZ = 0
    DELTA = 1


cdef inline double _riesz(double r2, double alpha, double floor2, double ball) noexcept nogil:
    if r2 < floor2:
        return ball
    # sqrt is much cheaper than pow for the common exponents
    if alpha == 1.0:
        return 1.0 / sqrt(r2)
    if alpha == 0.5:
        return 1.0 / sqrt(sqrt(r2))
    return pow(r2, -0.5 * alpha)


def pair_energy_batch(double[:, :, :, ::1] mid, double[:, ::1] ct, int kind,
                      double alpha, double floor, double ball, double var):
    """Per-sample, per-pair energies ``sum_ab ct[a, b] w(mid_j[a] - mid_k[b])``.

    ``mid`` has shape (samples, n, cells, d); the result has shape
    (samples, n (n - 1) / 2) with pairs in lexicographic order.
    """
    cdef Py_ssize_t S = mid.shape[0], n = mid.shape[1], M = mid.shape[2], d = mid.shape[3]
    cdef Py_ssize_t npairs = n * (n - 1) // 2
    out_arr = np.zeros((S, npairs), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t s, j, k, a, b, c, p
    cdef double acc, row, r2, diff, w
    cdef double floor2 = floor * floor
    cdef double inv2v = 0.5 / var if var > 0 else 0.0
    cdef double norm = 1.0 / sqrt(2.0 * 3.141592653589793 * var) if var > 0 else 0.0
    with nogil:
        for s in range(S):
            p = 0
            for j in range(n):
                for k in range(j + 1, n):
                    acc = 0.0
                    for a in range(M):
                        row = 0.0
                        for b in range(M):
                            r2 = 0.0
                            for c in range(d):
                                diff = mid[s, j, a, c] - mid[s, k, b, c]
                                r2 = r2 + diff * diff
                            if kind == DELTA:
                                w = norm * exp(-r2 * inv2v)
                            else:
                                w = _riesz(r2, alpha, floor2, ball)
                            row = row + ct[a, b] * w
                        acc = acc + row
                    out[s, p] = acc
                    p = p + 1
    return out_arr


def occupation_batch(double[:, :, ::1] pos, double eps, double dt):
    """``sum_{j<k} (1 / 2 eps) sum_m 1{|B_j - B_k| <= eps} dt`` per sample (d = 1).

    ``pos`` has shape (samples, n, steps) and holds positions at the right
    endpoints of the time steps.
    """
    cdef Py_ssize_t S = pos.shape[0], n = pos.shape[1], M = pos.shape[2]
    out_arr = np.zeros(S, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t s, j, k, m
    cdef long count
    cdef double scale = dt / (2.0 * eps)
    with nogil:
        for s in range(S):
            count = 0
            for j in range(n):
                for k in range(j + 1, n):
                    for m in range(M):
                        if fabs(pos[s, j, m] - pos[s, k, m]) <= eps:
                            count = count + 1
            out[s] = count * scale
    return out_arr
