# Compiled kernel backend. Same contract as _pure.py: C-contiguous float64
# arrays, symmetric (d, d) matrices, (m, d) feature blocks. Dimensions are
# capped at 128 so scratch space can live on the stack.

import numpy as np

from libc.math cimport sqrt

DEF MAX_DIM = 128


def ucb_scores(double[:, ::1] feats, double[::1] theta,
               double[:, ::1] minv, double alpha):
    """Score every item: estimate + alpha * confidence width."""
    cdef Py_ssize_t m = feats.shape[0]
    cdef Py_ssize_t d = feats.shape[1]
    if d > MAX_DIM or theta.shape[0] != d or minv.shape[0] != d or minv.shape[1] != d:
        raise ValueError("dimension mismatch or dimension above 128")
    scores_arr = np.empty(m, dtype=np.float64)
    widths_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] scores = scores_arr
    cdef double[::1] widths = widths_arr
    cdef Py_ssize_t i, j, l
    cdef double est, qf, acc, w
    with nogil:
        for i in range(m):
            est = 0.0
            for j in range(d):
                est += feats[i, j] * theta[j]
            qf = 0.0
            for j in range(d):
                acc = 0.0
                for l in range(d):
                    acc += minv[j, l] * feats[i, l]
                qf += feats[i, j] * acc
            w = sqrt(qf) if qf > 0.0 else 0.0
            widths[i] = w
            scores[i] = est + alpha * w
    return scores_arr, widths_arr


def quad_forms(double[:, ::1] feats, double[:, ::1] minv):
    """Quadratic form x_i . minv . x_i for every row of feats."""
    cdef Py_ssize_t m = feats.shape[0]
    cdef Py_ssize_t d = feats.shape[1]
    if minv.shape[0] != d or minv.shape[1] != d:
        raise ValueError("dimension mismatch")
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j, l
    cdef double qf, acc
    with nogil:
        for i in range(m):
            qf = 0.0
            for j in range(d):
                acc = 0.0
                for l in range(d):
                    acc += minv[j, l] * feats[i, l]
                qf += feats[i, j] * acc
            out[i] = qf
    return out_arr


def quad_form(double[:, ::1] minv, double[::1] x):
    """Quadratic form x . minv . x for a single vector."""
    cdef Py_ssize_t d = x.shape[0]
    if minv.shape[0] != d or minv.shape[1] != d:
        raise ValueError("dimension mismatch")
    cdef Py_ssize_t j, l
    cdef double qf = 0.0, acc
    with nogil:
        for j in range(d):
            acc = 0.0
            for l in range(d):
                acc += minv[j, l] * x[l]
            qf += x[j] * acc
    return qf


def rank1_update_inplace(double[:, ::1] m, double[::1] x, double c):
    """m += c * outer(x, x), in place."""
    cdef Py_ssize_t d = x.shape[0]
    if m.shape[0] != d or m.shape[1] != d:
        raise ValueError("dimension mismatch")
    cdef Py_ssize_t i, j
    cdef double cx
    with nogil:
        for i in range(d):
            cx = c * x[i]
            for j in range(d):
                m[i, j] += cx * x[j]


def sherman_morrison_inplace(double[:, ::1] minv, double[::1] x, double c):
    """Rank-1 inverse update; returns the denominator 1 + c x.minv.x.

    When the denominator is <= 0 the matrix is left untouched so the
    caller can raise.
    """
    cdef Py_ssize_t d = x.shape[0]
    if d > MAX_DIM or minv.shape[0] != d or minv.shape[1] != d:
        raise ValueError("dimension mismatch or dimension above 128")
    cdef double y[128]
    cdef Py_ssize_t i, j
    cdef double denom = 1.0, scale, yi
    with nogil:
        for i in range(d):
            yi = 0.0
            for j in range(d):
                yi += minv[i, j] * x[j]
            y[i] = yi
            denom += c * x[i] * yi
    if denom <= 0.0:
        return denom
    scale = c / denom
    with nogil:
        for i in range(d):
            yi = scale * y[i]
            for j in range(d):
                minv[i, j] -= yi * y[j]
    return denom
