# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled pairwise relation kernel; same contract as ``_pairs_py``."""
import numpy as np


cdef extern from "_pairs_row.h" nogil:
    void pair_row(const double* lrow, const double* srow, double* out,
                  double* cl, double* cr, Py_ssize_t n)


def pair_relu_sum(double[:, :, ::1] left, double[:, :, ::1] right,
                  double[::1] bias, bint include_self=True):
    cdef Py_ssize_t T = left.shape[0], K = left.shape[1], H = left.shape[2]
    shifted_arr = np.asarray(right) + np.asarray(bias)
    out_arr = np.zeros((T, H))
    cl_arr = np.zeros((T, K, H))
    cr_arr = np.zeros((T, K, H))
    cdef double[:, :, ::1] shifted = shifted_arr
    cdef double[:, ::1] out = out_arr
    cdef double[:, :, ::1] cl = cl_arr
    cdef double[:, :, ::1] cr = cr_arr
    cdef Py_ssize_t t, i, j, start
    if T == 0 or K == 0 or H == 0:
        return out_arr, cl_arr, cr_arr
    with nogil:
        for t in range(T):
            for i in range(K):
                start = i if include_self else i + 1
                for j in range(start, K):
                    pair_row(&left[t, i, 0], &shifted[t, j, 0], &out[t, 0],
                         &cl[t, i, 0], &cr[t, j, 0], H)
    return out_arr, cl_arr, cr_arr
