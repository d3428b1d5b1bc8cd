# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-node kernels; see ``_pykernels`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def project(const double[:, :, :] costs, const double[:, :] y):
    cdef Py_ssize_t n = y.shape[0], d = y.shape[1], k, i, j
    cdef double best, v
    out = np.empty((n, d))
    cdef double[:, :] o = out
    for k in range(n):
        for i in range(d):
            best = -INFINITY
            for j in range(d):
                v = y[k, j] - costs[k, i, j]
                if v > best:
                    best = v
            o[k, i] = best
    return out


def project_argmax(const double[:, :, :] costs, const double[:, :] y):
    cdef Py_ssize_t n = y.shape[0], d = y.shape[1], k, i, j, arg
    cdef double best, v
    out = np.empty((n, d))
    idx = np.empty((n, d), dtype=np.intp)
    cdef double[:, :] o = out
    cdef Py_ssize_t[:, :] ix = idx
    for k in range(n):
        for i in range(d):
            best = -INFINITY
            arg = 0
            for j in range(d):
                v = y[k, j] - costs[k, i, j]
                if v > best:
                    best = v
                    arg = j
            o[k, i] = best
            ix[k, i] = arg
    return out, idx


def best_switch(const double[:, :, :] costs, const double[:, :] y):
    cdef Py_ssize_t n = y.shape[0], d = y.shape[1], k, i, j, arg
    cdef double best, v
    out = np.empty((n, d))
    idx = np.empty((n, d), dtype=np.intp)
    cdef double[:, :] o = out
    cdef Py_ssize_t[:, :] ix = idx
    for k in range(n):
        for i in range(d):
            best = -INFINITY
            arg = 0
            for j in range(d):
                if j == i:
                    continue
                v = y[k, j] - costs[k, i, j]
                if v > best:
                    best = v
                    arg = j
            o[k, i] = best
            ix[k, i] = arg
    return out, idx


def in_domain(const double[:, :, :] costs, const double[:, :] y, double tol):
    cdef Py_ssize_t n = y.shape[0], d = y.shape[1], k, i, j
    cdef bint ok
    out = np.empty(n, dtype=np.uint8)
    cdef cnp.uint8_t[:] o = out
    for k in range(n):
        ok = True
        for i in range(d):
            for j in range(d):
                if y[k, i] < y[k, j] - costs[k, i, j] - tol:
                    ok = False
                    break
            if not ok:
                break
        o[k] = ok
    return out.view(bool)


def apply_switch_chain(const Py_ssize_t[:, :] decisions, const Py_ssize_t[:] mode_in,
                       const double[:, :, :] costs, Py_ssize_t max_switches):
    cdef Py_ssize_t n = mode_in.shape[0], k, s, m, t
    mode = np.empty(n, dtype=np.intp)
    paid = np.zeros(n)
    count = np.zeros(n, dtype=np.intp)
    cdef Py_ssize_t[:] mo = mode
    cdef double[:] pa = paid
    cdef Py_ssize_t[:] co = count
    for k in range(n):
        m = mode_in[k]
        for s in range(max_switches):
            t = decisions[k, m]
            if t == m:
                break
            pa[k] += costs[k, m, t]
            co[k] += 1
            m = t
        mo[k] = m
    return mode, paid, count
