# cython: language_level=3
"""Compiled inner loops: Markov path sampling and dual coordinate sweeps.

Every routine mirrors ``_kernels_py`` operation for operation so both
backends produce bit-identical results.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def sample_path(const double[:, ::1] cum, Py_ssize_t start, const double[::1] u):
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t n_states = cum.shape[0]
    cdef Py_ssize_t t, j, s
    cdef double v
    out = np.empty(n + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] states = out
    s = start
    states[0] = s
    for t in range(n):
        v = u[t]
        j = 0
        while j < n_states - 1 and not (v < cum[s, j]):
            j += 1
        s = j
        states[t + 1] = s
    return out


def svm_sweep(const double[:, ::1] G, const double[::1] y, double C,
              double[::1] alpha, double[::1] f):
    cdef Py_ssize_t m = G.shape[0]
    cdef Py_ssize_t i, j
    cdef double gii, new, d, s
    cdef double max_change = 0.0
    for i in range(m):
        gii = G[i, i]
        if gii <= 0.0:
            continue
        new = alpha[i] + (1.0 - y[i] * f[i]) / gii
        if new < 0.0:
            new = 0.0
        elif new > C:
            new = C
        d = new - alpha[i]
        if d == 0.0:
            continue
        alpha[i] = new
        s = d * y[i]
        for j in range(m):
            f[j] += s * G[i, j]
        if d < 0.0:
            d = -d
        if d > max_change:
            max_change = d
    return max_change


def svr_sweep(const double[:, ::1] G, const double[::1] y, double C, double eps,
              double[::1] beta, double[::1] f):
    cdef Py_ssize_t m = G.shape[0]
    cdef Py_ssize_t i, j
    cdef double gii, g, new, d
    cdef double max_change = 0.0
    for i in range(m):
        gii = G[i, i]
        if gii <= 0.0:
            continue
        g = y[i] - (f[i] - gii * beta[i])
        if g > eps:
            new = (g - eps) / gii
        elif g < -eps:
            new = (g + eps) / gii
        else:
            new = 0.0
        if new < -C:
            new = -C
        elif new > C:
            new = C
        d = new - beta[i]
        if d == 0.0:
            continue
        beta[i] = new
        for j in range(m):
            f[j] += d * G[i, j]
        if d < 0.0:
            d = -d
        if d > max_change:
            max_change = d
    return max_change
