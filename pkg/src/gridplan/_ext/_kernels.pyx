# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled scenario-reduction kernels; same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY, fabs

cnp.import_array()

cdef double TIE_RTOL = 1e-12


def pairwise_distances(X):
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], f = x.shape[1], i, j, k
    out = np.zeros((n, n))
    cdef double[:, ::1] o = out
    cdef double acc, diff
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(f):
                diff = x[j, k] - x[i, k]
                acc += diff * diff
            o[i, j] = sqrt(acc)
            o[j, i] = o[i, j]
    return out


def forward_select(dist, prob, Py_ssize_t count):
    cdef double[:, ::1] c = np.ascontiguousarray(dist, dtype=np.float64)
    cdef double[::1] p = np.ascontiguousarray(prob, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0], step, u, k, best
    if count < 0 or count > n:
        raise ValueError("count out of range")
    mind_arr = np.full(n, INFINITY)
    z_arr = np.empty(n)
    kept_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] mind = mind_arr
    cdef double[::1] z = z_arr
    cdef unsigned char[::1] kept = kept_arr
    cdef double acc, m, zmin
    order = []
    for step in range(count):
        zmin = INFINITY
        for u in range(n):
            if kept[u]:
                continue
            acc = 0.0
            for k in range(n):
                if kept[k]:
                    continue
                m = c[k, u]
                if mind[k] < m:
                    m = mind[k]
                acc += p[k] * m
            z[u] = acc
            if acc < zmin:
                zmin = acc
        best = -1
        for u in range(n):
            if not kept[u] and z[u] <= zmin + TIE_RTOL * fabs(zmin):
                best = u
                break
        order.append(best)
        kept[best] = 1
        for k in range(n):
            if c[k, best] < mind[k]:
                mind[k] = c[k, best]
    return order
