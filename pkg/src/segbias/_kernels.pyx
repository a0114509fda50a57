# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: binary morphology, patch featurization, and the
dense forward/backward passes. Semantics match ``_kernels_py`` exactly;
morphology is bit-identical, float kernels differ only by accumulation
order."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

BACKEND_NAME = "compiled"


def erode(cnp.uint8_t[:, ::1] mask not None, cnp.int64_t[:, ::1] offsets not None):
    cdef Py_ssize_t h = mask.shape[0]
    cdef Py_ssize_t w = mask.shape[1]
    cdef Py_ssize_t k = offsets.shape[0]
    out_arr = np.ones((h, w), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] out = out_arr
    cdef Py_ssize_t y, x, i, yy, xx
    with nogil:
        for y in range(h):
            for x in range(w):
                for i in range(k):
                    yy = y + offsets[i, 0]
                    xx = x + offsets[i, 1]
                    if yy < 0 or yy >= h or xx < 0 or xx >= w or mask[yy, xx] == 0:
                        out[y, x] = 0
                        break
    return out_arr


def dilate(cnp.uint8_t[:, ::1] mask not None, cnp.int64_t[:, ::1] offsets not None):
    cdef Py_ssize_t h = mask.shape[0]
    cdef Py_ssize_t w = mask.shape[1]
    cdef Py_ssize_t k = offsets.shape[0]
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] out = out_arr
    cdef Py_ssize_t y, x, i, yy, xx
    with nogil:
        for y in range(h):
            for x in range(w):
                for i in range(k):
                    yy = y + offsets[i, 0]
                    xx = x + offsets[i, 1]
                    if 0 <= yy < h and 0 <= xx < w and mask[yy, xx] != 0:
                        out[y, x] = 1
                        break
    return out_arr


def patch_features(cnp.float64_t[:, ::1] image not None, Py_ssize_t half):
    cdef Py_ssize_t h = image.shape[0]
    cdef Py_ssize_t w = image.shape[1]
    cdef Py_ssize_t k = 2 * half + 1
    cdef Py_ssize_t feat = k * k + 2
    out_arr = np.empty((h * w, feat), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] out = out_arr
    cdef double xden = 1.0 if w <= 1 else w - 1.0
    cdef double yden = 1.0 if h <= 1 else h - 1.0
    cdef Py_ssize_t y, x, dy, dx, yy, xx, row, col
    with nogil:
        for y in range(h):
            for x in range(w):
                row = y * w + x
                col = 0
                for dy in range(-half, half + 1):
                    yy = y + dy
                    if yy < 0:
                        yy = 0
                    elif yy >= h:
                        yy = h - 1
                    for dx in range(-half, half + 1):
                        xx = x + dx
                        if xx < 0:
                            xx = 0
                        elif xx >= w:
                            xx = w - 1
                        out[row, col] = image[yy, xx]
                        col += 1
                out[row, col] = x / xden
                out[row, col + 1] = y / yden
    return out_arr


def forward_dense(
    cnp.float64_t[:, ::1] X not None,
    cnp.float64_t[:, ::1] W1 not None,
    cnp.float64_t[::1] b1 not None,
    cnp.float64_t[::1] gamma not None,
    cnp.float64_t[::1] beta not None,
    cnp.float64_t[::1] w2 not None,
    double b2,
):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t f = X.shape[1]
    cdef Py_ssize_t hd = W1.shape[0]
    p_arr = np.empty(n, dtype=np.float64)
    h_arr = np.empty((n, hd), dtype=np.float64)
    cdef cnp.float64_t[::1] p = p_arr
    cdef cnp.float64_t[:, ::1] hidden = h_arr
    cdef Py_ssize_t i, j, c
    cdef double acc, z, hv, ez
    with nogil:
        for i in range(n):
            z = b2
            for j in range(hd):
                acc = b1[j]
                for c in range(f):
                    acc += W1[j, c] * X[i, c]
                hv = acc if acc > 0.0 else 0.0
                hidden[i, j] = hv
                z += (gamma[j] * hv + beta[j]) * w2[j]
            if z >= 0.0:
                p[i] = 1.0 / (1.0 + exp(-z))
            else:
                ez = exp(z)
                p[i] = ez / (1.0 + ez)
    return p_arr, h_arr


def backward_dense(
    cnp.float64_t[:, ::1] X not None,
    cnp.float64_t[:, ::1] hidden not None,
    cnp.float64_t[::1] gamma not None,
    cnp.float64_t[::1] beta not None,
    cnp.float64_t[::1] w2 not None,
    cnp.float64_t[::1] gz not None,
    cnp.float64_t[::1] ghid not None,
):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t f = X.shape[1]
    cdef Py_ssize_t hd = hidden.shape[1]
    dW1_arr = np.zeros((hd, f), dtype=np.float64)
    db1_arr = np.zeros(hd, dtype=np.float64)
    dgamma_arr = np.zeros(hd, dtype=np.float64)
    dbeta_arr = np.zeros(hd, dtype=np.float64)
    dw2_arr = np.zeros(hd, dtype=np.float64)
    cdef cnp.float64_t[:, ::1] dW1 = dW1_arr
    cdef cnp.float64_t[::1] db1 = db1_arr
    cdef cnp.float64_t[::1] dgamma = dgamma_arr
    cdef cnp.float64_t[::1] dbeta = dbeta_arr
    cdef cnp.float64_t[::1] dw2 = dw2_arr
    cdef double s0 = 0.0
    cdef double db2
    cdef Py_ssize_t i, j, c
    cdef double g, d, s1j
    with nogil:
        for i in range(n):
            s0 += gz[i]
        for j in range(hd):
            s1j = 0.0
            for i in range(n):
                s1j += gz[i] * hidden[i, j]
            dw2[j] = gamma[j] * s1j + beta[j] * s0
            dgamma[j] = w2[j] * s1j
            dbeta[j] = w2[j] * s0
        for i in range(n):
            g = gz[i]
            for j in range(hd):
                if hidden[i, j] > 0.0:
                    d = g * w2[j] * gamma[j] + ghid[j]
                    db1[j] += d
                    for c in range(f):
                        dW1[j, c] += d * X[i, c]
    db2 = s0
    return dW1_arr, db1_arr, dgamma_arr, dbeta_arr, dw2_arr, db2
