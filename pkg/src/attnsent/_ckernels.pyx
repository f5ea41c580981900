# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled numeric kernels.

Hot inner loops of attention weighting, composition and gradient
accumulation. Mirrors `_pykernels.py`; the sentence-length/vector-dim regime
here is small (n <= ~40, d <= ~300), where plain C loops beat NumPy's
per-call dispatch overhead.
"""

from libc.math cimport exp, sqrt

import numpy as np


def softmax(double[::1] scores):
    """Softmax of a 1-d score vector, max-shifted for stability."""
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t i
    cdef double m = scores[0]
    cdef double s = 0.0
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    for i in range(1, n):
        if scores[i] > m:
            m = scores[i]
    for i in range(n):
        out[i] = exp(scores[i] - m)
        s += out[i]
    for i in range(n):
        out[i] /= s
    return out_arr


def dot(double[::1] a, double[::1] b):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double s = 0.0
    for i in range(n):
        s += a[i] * b[i]
    return s


def cosine(double[::1] a, double[::1] b):
    """Cosine similarity; 0.0 when either vector has zero norm."""
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double ab = 0.0, aa = 0.0, bb = 0.0
    for i in range(n):
        ab += a[i] * b[i]
        aa += a[i] * a[i]
        bb += b[i] * b[i]
    if aa == 0.0 or bb == 0.0:
        return 0.0
    return ab / (sqrt(aa) * sqrt(bb))


def weighted_rowsum(double[:, ::1] matrix, Py_ssize_t[::1] ids,
                    double[::1] weights, double scale):
    """scale * sum_t weights[t] * matrix[ids[t]]."""
    cdef Py_ssize_t n = ids.shape[0]
    cdef Py_ssize_t d = matrix.shape[1]
    cdef Py_ssize_t t, j
    cdef double w
    out_arr = np.zeros(d, dtype=np.float64)
    cdef double[::1] out = out_arr
    for t in range(n):
        w = weights[t]
        for j in range(d):
            out[j] += w * matrix[ids[t], j]
    for j in range(d):
        out[j] *= scale
    return out_arr


def pair_dots(double[:, ::1] a_matrix, Py_ssize_t[::1] a_ids,
              double[:, ::1] b_matrix, Py_ssize_t[::1] b_ids):
    """Per-position dot products a_matrix[a_ids[t]] . b_matrix[b_ids[t]]."""
    cdef Py_ssize_t n = a_ids.shape[0]
    cdef Py_ssize_t d = a_matrix.shape[1]
    cdef Py_ssize_t t, j
    cdef double s
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    for t in range(n):
        s = 0.0
        for j in range(d):
            s += a_matrix[a_ids[t], j] * b_matrix[b_ids[t], j]
        out[t] = s
    return out_arr


def scatter_add_rows(double[:, ::1] out, Py_ssize_t[::1] ids,
                     double[::1] coefs, double[::1] vec):
    """out[ids[t]] += coefs[t] * vec, accumulating over duplicate ids."""
    cdef Py_ssize_t n = ids.shape[0]
    cdef Py_ssize_t d = out.shape[1]
    cdef Py_ssize_t t, j
    cdef double c
    for t in range(n):
        c = coefs[t]
        for j in range(d):
            out[ids[t], j] += c * vec[j]


def scatter_add_gathered(double[:, ::1] out, Py_ssize_t[::1] out_ids,
                         double[::1] coefs, double[:, ::1] src_matrix,
                         Py_ssize_t[::1] src_ids):
    """out[out_ids[t]] += coefs[t] * src_matrix[src_ids[t]]."""
    cdef Py_ssize_t n = out_ids.shape[0]
    cdef Py_ssize_t d = out.shape[1]
    cdef Py_ssize_t t, j
    cdef double c
    for t in range(n):
        c = coefs[t]
        for j in range(d):
            out[out_ids[t], j] += c * src_matrix[src_ids[t], j]
