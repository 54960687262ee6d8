# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sparse CP kernels.

Same contracts as ``_pykernels``. Reductions run sequentially in nonzero
order so results are bit-stable for a given input.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def sparse_inner(const cnp.int64_t[:, ::1] indices, const double[::1] values,
                 const double[:, ::1] A, const double[:, ::1] B,
                 const double[:, ::1] C):
    cdef Py_ssize_t nnz = values.shape[0]
    cdef Py_ssize_t rank = A.shape[1]
    cdef Py_ssize_t n, r, i, j, k
    cdef double total = 0.0
    cdef double cell
    for n in range(nnz):
        i = indices[n, 0]
        j = indices[n, 1]
        k = indices[n, 2]
        cell = 0.0
        for r in range(rank):
            cell += A[i, r] * B[j, r] * C[k, r]
        total += values[n] * cell
    return total


def sparse_mttkrp(const cnp.int64_t[:, ::1] indices, const double[::1] values,
                  const double[:, ::1] A, const double[:, ::1] B,
                  const double[:, ::1] C, int mode):
    cdef Py_ssize_t nnz = values.shape[0]
    cdef Py_ssize_t rank = A.shape[1]
    cdef Py_ssize_t n, r, row, p, q
    cdef double v
    cdef const double[:, ::1] target
    cdef const double[:, ::1] first
    cdef const double[:, ::1] second
    cdef int m_first, m_second

    if mode == 0:
        target = A
        first = B
        second = C
        m_first = 1
        m_second = 2
    elif mode == 1:
        target = B
        first = A
        second = C
        m_first = 0
        m_second = 2
    elif mode == 2:
        target = C
        first = A
        second = B
        m_first = 0
        m_second = 1
    else:
        raise ValueError("mode must be 0, 1 or 2")

    out_arr = np.zeros((target.shape[0], rank), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for n in range(nnz):
        row = indices[n, mode]
        p = indices[n, m_first]
        q = indices[n, m_second]
        v = values[n]
        for r in range(rank):
            out[row, r] += v * first[p, r] * second[q, r]
    return out_arr
