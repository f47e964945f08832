"""Conv2d hot kernels with backend selection at import.

The compiled Cython extension is preferred when it has been built
(`python setup.py build_ext --inplace`); otherwise the numpy fallback in
`reference` is used. `ECOTRAIN_KERNELS=numpy|compiled` forces a backend.

The public wrappers validate shapes (raising ShapeError naming the bad
axis) and coerce inputs to C-contiguous float64, so both backends see
identical, already-checked operands.
"""

import os

import numpy as np

from ..errors import ShapeError
from . import reference

_requested = os.environ.get("ECOTRAIN_KERNELS", "auto")
_impl = None
if _requested in ("auto", "compiled"):
    try:
        from . import _conv as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = None

BACKEND = "compiled" if _impl is not None else "numpy"


def available_backends():
    names = ["numpy"]
    if _impl is not None:
        names.insert(0, "compiled")
    return names


def conv_out_size(size, k, stride, pad):
    """Closed-form output length: floor((size + 2*pad - k) / stride) + 1."""
    return (size + 2 * pad - k) // stride + 1


def _as_f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _check_conv_args(x, w, stride, pad):
    if x.ndim != 4:
        raise ShapeError(f"input must be 4-d NCHW, got {x.ndim}-d")
    if w.ndim != 4:
        raise ShapeError(f"weight must be 4-d (Cout, Cin, K, K), got {w.ndim}-d")
    if w.shape[2] != w.shape[3]:
        raise ShapeError(f"kernel axes 2 and 3 must match, got {w.shape[2]}x{w.shape[3]}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"channel axis mismatch: input axis 1 has {x.shape[1]}, weight axis 1 has {w.shape[1]}"
        )
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if pad < 0:
        raise ShapeError(f"pad must be >= 0, got {pad}")
    ho = conv_out_size(x.shape[2], w.shape[2], stride, pad)
    wo = conv_out_size(x.shape[3], w.shape[3], stride, pad)
    if ho < 1 or wo < 1:
        raise ShapeError(
            f"spatial axes too small: {x.shape[2]}x{x.shape[3]} input with k={w.shape[2]}, "
            f"stride={stride}, pad={pad} gives {ho}x{wo} output"
        )
    return ho, wo


def conv2d_forward(x, w, stride=1, pad=0):
    x, w = _as_f64(x), _as_f64(w)
    _check_conv_args(x, w, stride, pad)
    if _impl is not None:
        return _impl.conv2d_forward(x, w, stride, pad)
    return reference.conv2d_forward(x, w, stride, pad)


def conv2d_backward_input(w, gy, h, wd, stride=1, pad=0):
    w, gy = _as_f64(w), _as_f64(gy)
    if gy.shape[1] != w.shape[0]:
        raise ShapeError(
            f"channel axis mismatch: grad axis 1 has {gy.shape[1]}, weight axis 0 has {w.shape[0]}"
        )
    if _impl is not None:
        return _impl.conv2d_backward_input(w, gy, h, wd, stride, pad)
    return reference.conv2d_backward_input(w, gy, h, wd, stride, pad)


def conv2d_backward_weight(x, gy, k, stride=1, pad=0):
    x, gy = _as_f64(x), _as_f64(gy)
    if x.shape[0] != gy.shape[0]:
        raise ShapeError(
            f"batch axis mismatch: input axis 0 has {x.shape[0]}, grad axis 0 has {gy.shape[0]}"
        )
    if _impl is not None:
        return _impl.conv2d_backward_weight(x, gy, k, stride, pad)
    return reference.conv2d_backward_weight(x, gy, k, stride, pad)
