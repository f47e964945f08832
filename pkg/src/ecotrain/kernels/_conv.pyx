# Direct 2-D convolution kernels (float64, NCHW, cross-correlation).
# Inputs are padded once into a scratch buffer so the hot loops are plain
# row operations: forward and input-gradient inner loops are axpy-style
# over the output row, the weight gradient is a strided dot product with
# four-way unrolled accumulators (keeps the sum order fixed and lets the
# compiler vectorize without reassociation).

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline object _padded(double[:, :, :, ::1] x, int pad):
    if pad == 0:
        return np.asarray(x)
    n, c, h, w = x.shape[0], x.shape[1], x.shape[2], x.shape[3]
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    out[:, :, pad : pad + h, pad : pad + w] = np.asarray(x)
    return out


def conv2d_forward(double[:, :, :, ::1] x, double[:, :, :, ::1] w,
                   int stride, int pad):
    cdef Py_ssize_t n_batch = x.shape[0], cin = x.shape[1]
    cdef Py_ssize_t h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t cout = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t ho = (h + 2 * pad - k) // stride + 1
    cdef Py_ssize_t wo = (wd + 2 * pad - k) // stride + 1

    cdef double[:, :, :, ::1] xp = _padded(x, pad)
    out_arr = np.zeros((n_batch, cout, ho, wo), dtype=np.float64)
    cdef double[:, :, :, ::1] y = out_arr
    cdef Py_ssize_t n, co, ci, oh, ow, kh, kw
    cdef double wv
    cdef double* yrow
    cdef double* xrow

    for n in range(n_batch):
        for co in range(cout):
            for ci in range(cin):
                for kh in range(k):
                    for kw in range(k):
                        wv = w[co, ci, kh, kw]
                        if wv == 0.0:
                            continue
                        for oh in range(ho):
                            yrow = &y[n, co, oh, 0]
                            xrow = &xp[n, ci, oh * stride + kh, kw]
                            if stride == 1:
                                for ow in range(wo):
                                    yrow[ow] += wv * xrow[ow]
                            else:
                                for ow in range(wo):
                                    yrow[ow] += wv * xrow[ow * stride]
    return out_arr


def conv2d_backward_input(double[:, :, :, ::1] w, double[:, :, :, ::1] gy,
                          Py_ssize_t h, Py_ssize_t wd, int stride, int pad):
    cdef Py_ssize_t n_batch = gy.shape[0], cout = gy.shape[1]
    cdef Py_ssize_t ho = gy.shape[2], wo = gy.shape[3]
    cdef Py_ssize_t cin = w.shape[1], k = w.shape[2]

    pad_arr = np.zeros((n_batch, cin, h + 2 * pad, wd + 2 * pad), dtype=np.float64)
    cdef double[:, :, :, ::1] gxp = pad_arr
    cdef Py_ssize_t n, co, ci, oh, ow, kh, kw
    cdef double wv
    cdef double* grow
    cdef double* gyrow

    for n in range(n_batch):
        for co in range(cout):
            for ci in range(cin):
                for kh in range(k):
                    for kw in range(k):
                        wv = w[co, ci, kh, kw]
                        if wv == 0.0:
                            continue
                        for oh in range(ho):
                            gyrow = &gy[n, co, oh, 0]
                            grow = &gxp[n, ci, oh * stride + kh, kw]
                            if stride == 1:
                                for ow in range(wo):
                                    grow[ow] += wv * gyrow[ow]
                            else:
                                for ow in range(wo):
                                    grow[ow * stride] += wv * gyrow[ow]
    if pad == 0:
        return pad_arr
    return np.ascontiguousarray(pad_arr[:, :, pad : pad + h, pad : pad + wd])


def conv2d_backward_weight(double[:, :, :, ::1] x, double[:, :, :, ::1] gy,
                           Py_ssize_t k, int stride, int pad):
    cdef Py_ssize_t n_batch = x.shape[0], cin = x.shape[1]
    cdef Py_ssize_t h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t cout = gy.shape[1], ho = gy.shape[2], wo = gy.shape[3]

    cdef double[:, :, :, ::1] xp = _padded(x, pad)
    out_arr = np.zeros((cout, cin, k, k), dtype=np.float64)
    cdef double[:, :, :, ::1] gw = out_arr
    cdef Py_ssize_t n, co, ci, oh, ow, kh, kw, w4
    cdef double a0, a1, a2, a3
    cdef double* xrow
    cdef double* gyrow

    w4 = wo - (wo & 3)
    for co in range(cout):
        for ci in range(cin):
            for kh in range(k):
                for kw in range(k):
                    a0 = a1 = a2 = a3 = 0.0
                    for n in range(n_batch):
                        for oh in range(ho):
                            xrow = &xp[n, ci, oh * stride + kh, kw]
                            gyrow = &gy[n, co, oh, 0]
                            if stride == 1:
                                for ow in range(0, w4, 4):
                                    a0 += xrow[ow] * gyrow[ow]
                                    a1 += xrow[ow + 1] * gyrow[ow + 1]
                                    a2 += xrow[ow + 2] * gyrow[ow + 2]
                                    a3 += xrow[ow + 3] * gyrow[ow + 3]
                                for ow in range(w4, wo):
                                    a0 += xrow[ow] * gyrow[ow]
                            else:
                                for ow in range(wo):
                                    a0 += xrow[ow * stride] * gyrow[ow]
                    gw[co, ci, kh, kw] = a0 + a1 + a2 + a3
    return out_arr
