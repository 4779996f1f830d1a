# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel backend.

Same contract as ``numpy_backend``: C-contiguous float64 arrays in and
out, uint8 masks where nonzero means valid, backward kernels take the
saved forward outputs.  Loops are ordered for contiguous row access.
"""

import numpy as np

from libc.math cimport exp, log, sqrt, tanh as c_tanh

NAME = "compiled"


def matmul(double[:, ::1] a, double[:, ::1] b):
    cdef Py_ssize_t m = a.shape[0], k = a.shape[1], n = b.shape[1]
    cdef Py_ssize_t i, j, p
    cdef double aip
    out_arr = np.zeros((m, n))
    cdef double[:, ::1] o = out_arr
    for i in range(m):
        for p in range(k):
            aip = a[i, p]
            for j in range(n):
                o[i, j] += aip * b[p, j]
    return out_arr


def matmul_ta(double[:, ::1] a, double[:, ::1] b):
    # a[m x k].T @ b[m x n] -> [k x n]
    cdef Py_ssize_t m = a.shape[0], k = a.shape[1], n = b.shape[1]
    cdef Py_ssize_t i, j, p
    cdef double aip
    out_arr = np.zeros((k, n))
    cdef double[:, ::1] o = out_arr
    for i in range(m):
        for p in range(k):
            aip = a[i, p]
            for j in range(n):
                o[p, j] += aip * b[i, j]
    return out_arr


def matmul_tb(double[:, ::1] a, double[:, ::1] b):
    # a[m x k] @ b[n x k].T -> [m x n]
    cdef Py_ssize_t m = a.shape[0], k = a.shape[1], n = b.shape[0]
    cdef Py_ssize_t i, j, p
    cdef double s
    out_arr = np.empty((m, n))
    cdef double[:, ::1] o = out_arr
    for i in range(m):
        for j in range(n):
            s = 0.0
            for p in range(k):
                s += a[i, p] * b[j, p]
            o[i, j] = s
    return out_arr


def softmax_rows(double[:, ::1] x, unsigned char[:, ::1] mask):
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1]
    cdef Py_ssize_t i, j
    cdef double hi, z, v
    out_arr = np.zeros((m, n))
    cdef double[:, ::1] o = out_arr
    for i in range(m):
        hi = 0.0
        z = 0.0
        for j in range(n):
            if mask[i, j]:
                v = x[i, j]
                if z == 0.0 or v > hi:
                    hi = v
                z = 1.0
        z = 0.0
        for j in range(n):
            if mask[i, j]:
                v = exp(x[i, j] - hi)
                o[i, j] = v
                z += v
        for j in range(n):
            if mask[i, j]:
                o[i, j] /= z
    return out_arr


def softmax_rows_grad(double[:, ::1] y, double[:, ::1] gy,
                      unsigned char[:, ::1] mask):
    cdef Py_ssize_t m = y.shape[0], n = y.shape[1]
    cdef Py_ssize_t i, j
    cdef double dot
    out_arr = np.zeros((m, n))
    cdef double[:, ::1] o = out_arr
    for i in range(m):
        dot = 0.0
        for j in range(n):
            if mask[i, j]:
                dot += gy[i, j] * y[i, j]
        for j in range(n):
            if mask[i, j]:
                o[i, j] = y[i, j] * (gy[i, j] - dot)
    return out_arr


def tanh_fwd(double[::1] x):
    cdef Py_ssize_t n = x.shape[0], i
    out_arr = np.empty(n)
    cdef double[::1] o = out_arr
    for i in range(n):
        o[i] = c_tanh(x[i])
    return out_arr


def tanh_grad(double[::1] y, double[::1] gy):
    cdef Py_ssize_t n = y.shape[0], i
    out_arr = np.empty(n)
    cdef double[::1] o = out_arr
    for i in range(n):
        o[i] = gy[i] * (1.0 - y[i] * y[i])
    return out_arr


def sigmoid_fwd(double[::1] x):
    cdef Py_ssize_t n = x.shape[0], i
    cdef double e
    out_arr = np.empty(n)
    cdef double[::1] o = out_arr
    for i in range(n):
        if x[i] >= 0.0:
            o[i] = 1.0 / (1.0 + exp(-x[i]))
        else:
            e = exp(x[i])
            o[i] = e / (1.0 + e)
    return out_arr


def sigmoid_grad(double[::1] y, double[::1] gy):
    cdef Py_ssize_t n = y.shape[0], i
    out_arr = np.empty(n)
    cdef double[::1] o = out_arr
    for i in range(n):
        o[i] = gy[i] * y[i] * (1.0 - y[i])
    return out_arr


def relu_fwd(double[::1] x):
    cdef Py_ssize_t n = x.shape[0], i
    out_arr = np.empty(n)
    cdef double[::1] o = out_arr
    for i in range(n):
        o[i] = x[i] if x[i] > 0.0 else 0.0
    return out_arr


def relu_grad(double[::1] y, double[::1] gy):
    cdef Py_ssize_t n = y.shape[0], i
    out_arr = np.empty(n)
    cdef double[::1] o = out_arr
    for i in range(n):
        o[i] = gy[i] if y[i] > 0.0 else 0.0
    return out_arr


def maxpool_rows(double[:, ::1] x, unsigned char[::1] row_mask):
    # Column-wise max over valid rows; ties keep the lowest row index.
    cdef Py_ssize_t m = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j
    cdef double v
    out_arr = np.empty(d)
    arg_arr = np.empty(d, dtype=np.int64)
    cdef double[::1] o = out_arr
    cdef long long[::1] arg = arg_arr
    cdef bint seen
    for j in range(d):
        seen = False
        for i in range(m):
            if row_mask[i]:
                v = x[i, j]
                if not seen or v > o[j]:
                    o[j] = v
                    arg[j] = i
                    seen = True
    return out_arr, arg_arr


def maxpool_rows_grad(double[::1] gy, long long[::1] arg, Py_ssize_t nrows):
    cdef Py_ssize_t d = gy.shape[0], j
    out_arr = np.zeros((nrows, d))
    cdef double[:, ::1] o = out_arr
    for j in range(d):
        o[arg[j], j] += gy[j]
    return out_arr


def layernorm_rows(double[:, ::1] x, double[::1] gain, double[::1] bias,
                   double eps):
    cdef Py_ssize_t m = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j
    cdef double mean, var, dev, istd
    y_arr = np.empty((m, d))
    xhat_arr = np.empty((m, d))
    istd_arr = np.empty(m)
    cdef double[:, ::1] y = y_arr
    cdef double[:, ::1] xhat = xhat_arr
    cdef double[::1] inv_std = istd_arr
    for i in range(m):
        mean = 0.0
        for j in range(d):
            mean += x[i, j]
        mean /= d
        var = 0.0
        for j in range(d):
            dev = x[i, j] - mean
            var += dev * dev
        var /= d
        istd = 1.0 / sqrt(var + eps)
        inv_std[i] = istd
        for j in range(d):
            xhat[i, j] = (x[i, j] - mean) * istd
            y[i, j] = xhat[i, j] * gain[j] + bias[j]
    return y_arr, xhat_arr, istd_arr


def layernorm_rows_grad(double[:, ::1] gy, double[:, ::1] xhat,
                        double[::1] inv_std, double[::1] gain):
    cdef Py_ssize_t m = gy.shape[0], d = gy.shape[1]
    cdef Py_ssize_t i, j
    cdef double gh, mean_gh, mean_ghx
    gx_arr = np.empty((m, d))
    dgain_arr = np.zeros(d)
    dbias_arr = np.zeros(d)
    cdef double[:, ::1] gx = gx_arr
    cdef double[::1] dgain = dgain_arr
    cdef double[::1] dbias = dbias_arr
    for i in range(m):
        mean_gh = 0.0
        mean_ghx = 0.0
        for j in range(d):
            gh = gy[i, j] * gain[j]
            mean_gh += gh
            mean_ghx += gh * xhat[i, j]
        mean_gh /= d
        mean_ghx /= d
        for j in range(d):
            gh = gy[i, j] * gain[j]
            gx[i, j] = inv_std[i] * (gh - mean_gh - xhat[i, j] * mean_ghx)
            dgain[j] += gy[i, j] * xhat[i, j]
            dbias[j] += gy[i, j]
    return gx_arr, dgain_arr, dbias_arr


def scatter_add_rows(double[:, ::1] out, long long[::1] ids,
                     double[:, ::1] g):
    cdef Py_ssize_t n = ids.shape[0], d = out.shape[1]
    cdef Py_ssize_t i, j, r
    for i in range(n):
        r = ids[i]
        if r < 0 or r >= out.shape[0]:
            raise IndexError(f"row id {r} out of range for {out.shape[0]} rows")
        for j in range(d):
            out[r, j] += g[i, j]
    return None
