"""Pure-numpy conv kernels (im2col views + BLAS contractions).

This is the fallback backend; `ecotrain.kernels` picks between this module
and the compiled extension at import time. Shapes are NCHW, weights are
(Cout, Cin, K, K), and the operation is cross-correlation.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided


def _patch_view(x_padded, k, stride, ho, wo):
    # (N, C, Hp, Wp) -> read-only view (N, C, K, K, Ho, Wo)
    n, c, _, _ = x_padded.shape
    sn, sc, sh, sw = x_padded.strides
    return as_strided(
        x_padded,
        shape=(n, c, k, k, ho, wo),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )


def _pad(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def conv2d_forward(x, w, stride, pad):
    k = w.shape[2]
    ho = (x.shape[2] + 2 * pad - k) // stride + 1
    wo = (x.shape[3] + 2 * pad - k) // stride + 1
    patches = _patch_view(_pad(x, pad), k, stride, ho, wo)
    y = np.tensordot(w, patches, axes=([1, 2, 3], [1, 2, 3]))
    return np.ascontiguousarray(y.transpose(1, 0, 2, 3))


def conv2d_backward_input(w, gy, h, wd, stride, pad):
    n, _, ho, wo = gy.shape
    cin, k = w.shape[1], w.shape[2]
    # (Cin, K, K, N, Ho, Wo)
    t = np.tensordot(w, gy, axes=([0], [1]))
    gx_pad = np.zeros((n, cin, h + 2 * pad, wd + 2 * pad))
    for kh in range(k):
        for kw in range(k):
            gx_pad[:, :, kh : kh + stride * ho : stride, kw : kw + stride * wo : stride] += (
                t[:, kh, kw].transpose(1, 0, 2, 3)
            )
    if pad == 0:
        return gx_pad
    return np.ascontiguousarray(gx_pad[:, :, pad : pad + h, pad : pad + wd])


def conv2d_backward_weight(x, gy, k, stride, pad):
    ho, wo = gy.shape[2], gy.shape[3]
    patches = _patch_view(_pad(x, pad), k, stride, ho, wo)
    gw = np.tensordot(gy, patches, axes=([0, 2, 3], [0, 4, 5]))
    return np.ascontiguousarray(gw)
