# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_pykernels``.

Loop nests keep the (i, j) kernel offsets outermost inside each channel so
overlapping contributions in ``col2im`` are summed in the same order as the
numpy version.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def im2col(const double[:, :, :, ::1] xp, Py_ssize_t kh, Py_ssize_t kw,
           Py_ssize_t sh, Py_ssize_t sw):
    cdef Py_ssize_t b = xp.shape[0], c = xp.shape[1], hp = xp.shape[2], wp = xp.shape[3]
    cdef Py_ssize_t ho = (hp - kh) // sh + 1
    cdef Py_ssize_t wo = (wp - kw) // sw + 1
    out_arr = np.empty((b, c * kh * kw, ho * wo))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t n, ch, i, j, y, x, row
    for n in range(b):
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ch * kh + i) * kw + j
                    for y in range(ho):
                        for x in range(wo):
                            out[n, row, y * wo + x] = xp[n, ch, i + y * sh, j + x * sw]
    return out_arr


def col2im(cols, Py_ssize_t c, Py_ssize_t hp, Py_ssize_t wp, Py_ssize_t kh,
           Py_ssize_t kw, Py_ssize_t sh, Py_ssize_t sw):
    cdef const double[:, :, ::1] cv = np.ascontiguousarray(cols, dtype=np.float64)
    cdef Py_ssize_t b = cv.shape[0]
    cdef Py_ssize_t ho = (hp - kh) // sh + 1
    cdef Py_ssize_t wo = (wp - kw) // sw + 1
    out_arr = np.zeros((b, c, hp, wp))
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t n, ch, i, j, y, x, row
    for n in range(b):
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ch * kh + i) * kw + j
                    for y in range(ho):
                        for x in range(wo):
                            out[n, ch, i + y * sh, j + x * sw] += cv[n, row, y * wo + x]
    return out_arr


def maxpool_forward(x, Py_ssize_t ph, Py_ssize_t pw):
    cdef const double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t b = xv.shape[0], c = xv.shape[1]
    cdef Py_ssize_t ho = xv.shape[2] // ph, wo = xv.shape[3] // pw
    out_arr = np.empty((b, c, ho, wo))
    arg_arr = np.empty((b, c, ho, wo), dtype=np.int64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef cnp.int64_t[:, :, :, ::1] arg = arg_arr
    cdef Py_ssize_t n, ch, y, xx, i, j, best_k
    cdef double best, v
    for n in range(b):
        for ch in range(c):
            for y in range(ho):
                for xx in range(wo):
                    best = xv[n, ch, y * ph, xx * pw]
                    best_k = 0
                    for i in range(ph):
                        for j in range(pw):
                            v = xv[n, ch, y * ph + i, xx * pw + j]
                            # strict '>' keeps the first maximum in row-major order
                            if v > best:
                                best = v
                                best_k = i * pw + j
                    out[n, ch, y, xx] = best
                    arg[n, ch, y, xx] = best_k
    return out_arr, arg_arr


def maxpool_backward(g, arg, Py_ssize_t h, Py_ssize_t w, Py_ssize_t ph, Py_ssize_t pw):
    cdef const double[:, :, :, ::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    cdef const cnp.int64_t[:, :, :, ::1] av = np.ascontiguousarray(arg, dtype=np.int64)
    cdef Py_ssize_t b = gv.shape[0], c = gv.shape[1], ho = gv.shape[2], wo = gv.shape[3]
    out_arr = np.zeros((b, c, h, w))
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t n, ch, y, xx, k
    for n in range(b):
        for ch in range(c):
            for y in range(ho):
                for xx in range(wo):
                    k = av[n, ch, y, xx]
                    out[n, ch, y * ph + k // pw, xx * pw + k % pw] = gv[n, ch, y, xx]
    return out_arr
