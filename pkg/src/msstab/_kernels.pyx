# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled trajectory stepping for a chunk of independent samples.

Mirrors :func:`msstab._kernels_py.advance_block`; see that module for the
meaning of every argument.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef inline void _band_axpy(const double[:, :, ::1] bands, const Py_ssize_t[:, ::1] span,
                            Py_ssize_t m, double w, const double[::1] x, double[::1] out,
                            Py_ssize_t n) noexcept nogil:
    # out += w * B_m x for the tridiagonal B_m stored as bands[m]; rows outside
    # span[m] are identically zero
    cdef Py_ssize_t i, lo = span[m, 0], hi = span[m, 1]
    for i in range(lo, hi):
        out[i] += w * bands[m, 1, i] * x[i]
    for i in range(max(lo, 1), hi):
        out[i] += w * bands[m, 0, i] * x[i - 1]
    for i in range(lo, min(hi, n - 1)):
        out[i] += w * bands[m, 2, i] * x[i + 1]


def advance_block(double[:, ::1] X, const double[:, :, ::1] normals, double dt,
                  const double[:, ::1] d_det, const double[:, ::1] prefix, bint diagonal,
                  const double[:, :, ::1] mode_bands, const double[::1] amplitudes,
                  const Py_ssize_t[:, ::1] pair_index, const double[:, :, ::1] pair_bands,
                  const double[::1] pair_weights, const double[:, ::1] gram_bands,
                  double[:, ::1] norms_out, double[:, :, ::1] states_out,
                  const Py_ssize_t[:, ::1] mode_span, const Py_ssize_t[:, ::1] pair_span):
    cdef Py_ssize_t S = X.shape[0], N = X.shape[1]
    cdef Py_ssize_t B = normals.shape[1], K = normals.shape[2]
    cdef Py_ssize_t P = pair_index.shape[0]
    cdef bint keep_states = states_out.shape[0] > 0
    cdef Py_ssize_t s, b, k, p, i, j
    cdef double sq = sqrt(dt), acc, xi, w, db_k, db_l
    cdef double[::1] x, inner, y, xis
    x = np.empty(N)
    inner = np.empty(N)
    y = np.empty(N)
    xis = np.empty(K)
    with nogil:
        for s in range(S):
            for i in range(N):
                x[i] = X[s, i]
            for b in range(B):
                for i in range(N):
                    inner[i] = 0.0
                for k in range(K):
                    xis[k] = sq * normals[s, b, k]
                    xi = amplitudes[k] * xis[k]
                    if xi != 0.0:
                        _band_axpy(mode_bands, mode_span, k, xi, x, inner, N)
                for p in range(P):
                    k = pair_index[p, 0]
                    j = pair_index[p, 1]
                    db_k = xis[k]
                    db_l = xis[j]
                    if k == j:
                        w = pair_weights[p] * 0.5 * (db_k * db_l - dt)
                    else:
                        w = pair_weights[p] * 0.5 * db_k * db_l
                    if w != 0.0:
                        _band_axpy(pair_bands, pair_span, p, w, x, inner, N)
                if diagonal:
                    for i in range(N):
                        y[i] = d_det[i, i] * x[i] + prefix[i, i] * inner[i]
                else:
                    for i in range(N):
                        acc = 0.0
                        for j in range(N):
                            acc += d_det[i, j] * x[j] + prefix[i, j] * inner[j]
                        y[i] = acc
                for i in range(N):
                    x[i] = y[i]
                acc = 0.0
                for i in range(N):
                    acc += x[i] * gram_bands[1, i] * x[i]
                for i in range(1, N):
                    acc += x[i] * gram_bands[0, i] * x[i - 1]
                for i in range(N - 1):
                    acc += x[i] * gram_bands[2, i] * x[i + 1]
                norms_out[s, b] = acc
                if keep_states:
                    for i in range(N):
                        states_out[s, b, i] = x[i]
            for i in range(N):
                X[s, i] = x[i]
