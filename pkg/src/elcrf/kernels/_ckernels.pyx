# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled lattice kernels: forward, backward, pairwise expectations and
Viterbi over a ``T x M`` local score table and an ``M x M`` transition table.
Semantics match ``_pykernels`` exactly, including tie-breaking."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()

cdef double NEG_INF = -1e30


cdef inline double _clamp(double x) noexcept nogil:
    return x if x > NEG_INF else NEG_INF


# below this a scaled sum may have lost precision; redo that cell exactly
cdef double TINY = 1e-200


cdef inline double _lse_col(double[:, ::1] alpha, Py_ssize_t t, double[:, ::1] trans,
                            Py_ssize_t j, Py_ssize_t M) noexcept nogil:
    # exact log sum_i exp(alpha[t, i] + trans[i, j])
    cdef Py_ssize_t i
    cdef double m = alpha[t, 0] + trans[0, j], v, s = 0.0
    for i in range(1, M):
        v = alpha[t, i] + trans[i, j]
        if v > m:
            m = v
    for i in range(M):
        s += exp(alpha[t, i] + trans[i, j] - m)
    return m + log(s)


cdef inline double _lse_row(double[:, ::1] trans, Py_ssize_t i, double[::1] right,
                            Py_ssize_t M) noexcept nogil:
    # exact log sum_j exp(trans[i, j] + right[j])
    cdef Py_ssize_t j
    cdef double m = trans[i, 0] + right[0], v, s = 0.0
    for j in range(1, M):
        v = trans[i, j] + right[j]
        if v > m:
            m = v
    for j in range(M):
        s += exp(trans[i, j] + right[j] - m)
    return m + log(s)


def forward(double[:, ::1] psi, double[:, ::1] trans):
    cdef Py_ssize_t T = psi.shape[0], M = psi.shape[1]
    cdef Py_ssize_t t, i, j
    cdef double m, p
    out = np.empty((T, M), dtype=np.float64)
    cdef double[:, ::1] alpha = out
    # exp(trans) shifted by its column maxima, computed once
    cdef double[::1] cmax = np.empty(M, dtype=np.float64)
    cdef double[:, ::1] E = np.empty((M, M), dtype=np.float64)
    cdef double[::1] acc = np.empty(M, dtype=np.float64)
    with nogil:
        for j in range(M):
            cmax[j] = trans[0, j]
        for i in range(1, M):
            for j in range(M):
                if trans[i, j] > cmax[j]:
                    cmax[j] = trans[i, j]
        for i in range(M):
            for j in range(M):
                E[i, j] = exp(trans[i, j] - cmax[j])
        for j in range(M):
            alpha[0, j] = _clamp(psi[0, j])
        for t in range(1, T):
            m = alpha[t - 1, 0]
            for i in range(1, M):
                if alpha[t - 1, i] > m:
                    m = alpha[t - 1, i]
            for j in range(M):
                acc[j] = 0.0
            for i in range(M):
                p = exp(alpha[t - 1, i] - m)
                if p == 0.0:
                    continue
                for j in range(M):
                    acc[j] += p * E[i, j]
            for j in range(M):
                if acc[j] > TINY:
                    alpha[t, j] = _clamp(psi[t, j] + m + cmax[j] + log(acc[j]))
                else:
                    alpha[t, j] = _clamp(psi[t, j] + _lse_col(alpha, t - 1, trans, j, M))
    return out


def backward(double[:, ::1] psi, double[:, ::1] trans):
    cdef Py_ssize_t T = psi.shape[0], M = psi.shape[1]
    cdef Py_ssize_t t, i, j
    cdef double r, s
    out = np.empty((T, M), dtype=np.float64)
    cdef double[:, ::1] beta = out
    cdef double[::1] right = np.empty(M, dtype=np.float64)
    cdef double[::1] q = np.empty(M, dtype=np.float64)
    # exp(trans) shifted by its row maxima, computed once
    cdef double[::1] rmax = np.empty(M, dtype=np.float64)
    cdef double[:, ::1] E = np.empty((M, M), dtype=np.float64)
    with nogil:
        for i in range(M):
            rmax[i] = trans[i, 0]
            for j in range(1, M):
                if trans[i, j] > rmax[i]:
                    rmax[i] = trans[i, j]
            for j in range(M):
                E[i, j] = exp(trans[i, j] - rmax[i])
        for i in range(M):
            beta[T - 1, i] = 0.0
        for t in range(T - 2, -1, -1):
            for j in range(M):
                right[j] = psi[t + 1, j] + beta[t + 1, j]
            r = right[0]
            for j in range(1, M):
                if right[j] > r:
                    r = right[j]
            for j in range(M):
                q[j] = exp(right[j] - r)
            for i in range(M):
                s = 0.0
                for j in range(M):
                    s += E[i, j] * q[j]
                if s > TINY:
                    beta[t, i] = _clamp(r + rmax[i] + log(s))
                else:
                    beta[t, i] = _clamp(_lse_row(trans, i, right, M))
    return out


def edge_expectations(double[:, ::1] psi, double[:, ::1] trans,
                      double[:, ::1] alpha, double[:, ::1] beta, double log_z):
    cdef Py_ssize_t T = psi.shape[0], M = psi.shape[1]
    cdef Py_ssize_t t, i, j
    cdef double a, g, amax, rmax, K, pa
    out = np.zeros((M, M), dtype=np.float64)
    cdef double[:, ::1] acc = out
    cdef double[::1] right = np.empty(M, dtype=np.float64)
    cdef double[::1] q = np.empty(M, dtype=np.float64)
    cdef double[:, ::1] E = np.empty((M, M), dtype=np.float64)
    with nogil:
        g = trans[0, 0]
        for i in range(M):
            for j in range(M):
                if trans[i, j] > g:
                    g = trans[i, j]
        for i in range(M):
            for j in range(M):
                E[i, j] = exp(trans[i, j] - g)
        for t in range(T - 1):
            for j in range(M):
                right[j] = psi[t + 1, j] + beta[t + 1, j]
            amax = alpha[t, 0]
            rmax = right[0]
            for i in range(1, M):
                if alpha[t, i] > amax:
                    amax = alpha[t, i]
                if right[i] > rmax:
                    rmax = right[i]
            # each entry is exp(a_i - amax) * E_ij * exp(r_j - rmax) * exp(K)
            K = amax + g + rmax - log_z
            if K <= 600.0:
                K = exp(K)
                for j in range(M):
                    q[j] = exp(right[j] - rmax) * K
                for i in range(M):
                    pa = exp(alpha[t, i] - amax)
                    if pa == 0.0:
                        continue
                    for j in range(M):
                        acc[i, j] += pa * E[i, j] * q[j]
            else:
                for i in range(M):
                    a = alpha[t, i] - log_z
                    for j in range(M):
                        acc[i, j] += exp(a + trans[i, j] + right[j])
    return out


def viterbi(double[:, ::1] psi, double[:, ::1] trans):
    cdef Py_ssize_t T = psi.shape[0], M = psi.shape[1]
    cdef Py_ssize_t t, i, j, best_i
    cdef double v, a
    cdef double[::1] prev = np.empty(M, dtype=np.float64)
    cdef double[::1] cur = np.empty(M, dtype=np.float64)
    back_arr = np.zeros((T, M), dtype=np.intp)
    cdef Py_ssize_t[:, ::1] back = back_arr
    path_arr = np.empty(T, dtype=np.intp)
    cdef Py_ssize_t[::1] path = path_arr
    with nogil:
        for j in range(M):
            prev[j] = _clamp(psi[0, j])
        for t in range(1, T):
            # sweep predecessors in increasing order over contiguous rows;
            # a strict comparison keeps the lowest index on ties
            a = prev[0]
            for j in range(M):
                cur[j] = a + trans[0, j]
                back[t, j] = 0
            for i in range(1, M):
                a = prev[i]
                for j in range(M):
                    v = a + trans[i, j]
                    if v > cur[j]:
                        cur[j] = v
                        back[t, j] = i
            for j in range(M):
                prev[j] = _clamp(psi[t, j] + cur[j])
        best_i = 0
        for j in range(1, M):
            if prev[j] > prev[best_i]:
                best_i = j
        path[T - 1] = best_i
        for t in range(T - 1, 0, -1):
            path[t - 1] = back[t, path[t]]
    return path_arr, float(prev[best_i])
