"""NCHW layers with hand-written backward passes and metered compute.

Every weight gradient is an inner-product accumulation over the cached
forward input and the incoming output gradient; Conv2d and Dense expose
that accumulation as `weight_grad(x, gy)` so the sign-predicting optimizer
can rerun it on low-bit operands.

Metering conventions (one multiply-accumulate = 1 multiply + 1 add):
  conv/dense       mult = add = MAC count per pass
  relu             1 add-class op per element (the compare)
  batchnorm        2 mult + 2 add per element forward, 3 + 3 backward
  global avg pool  1 add per element forward, 1 mult backward
  data_move        one move per element read or written
"""

import numpy as np

from . import kernels
from .errors import ShapeError, StateError


class Parameter:
    """A trainable array plus its gradient slot.

    `layer` points back at the owning layer only for weights whose gradient
    is an interceptable inner-product accumulation (conv/dense kernels);
    it is None for biases and batchnorm affine terms.
    """

    __slots__ = ("name", "data", "grad", "layer")

    def __init__(self, name, data, layer=None):
        self.name = name
        self.data = data
        self.grad = None
        self.layer = layer

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.data.shape})"


def _meter(ledger, bits, mult=0, add=0, move=0):
    if ledger is None:
        return
    if mult:
        ledger.record("multiply", mult, bits)
    if add:
        ledger.record("add", add, bits)
    if move:
        ledger.record("data_move", move, bits)


class Conv2d:
    def __init__(self, cin, cout, k, stride=1, pad=1, rng=None):
        rng = rng or np.random.default_rng()
        std = np.sqrt(2.0 / (cin * k * k))
        self.stride, self.pad, self.k = stride, pad, k
        self.w = Parameter("w", rng.normal(0.0, std, (cout, cin, k, k)), layer=self)
        self.cached_input = None
        self.cached_grad_output = None

    def params(self):
        return [self.w]

    def macs(self, x_shape):
        n, cin, h, wd = x_shape
        cout = self.w.data.shape[0]
        ho = kernels.conv_out_size(h, self.k, self.stride, self.pad)
        wo = kernels.conv_out_size(wd, self.k, self.stride, self.pad)
        return n * cout * cin * self.k * self.k * ho * wo

    def forward(self, x, ledger=None, bits=32):
        y = kernels.conv2d_forward(x, self.w.data, self.stride, self.pad)
        self.cached_input = x
        self.cached_grad_output = None
        m = self.macs(x.shape)
        _meter(ledger, bits, mult=m, add=m, move=x.size + self.w.data.size + y.size)
        return y

    def backward(self, gy, ledger=None, bits=32, accumulate_weight_grad=True):
        x = self.cached_input
        if x is None:
            raise StateError("Conv2d.backward called before forward")
        self.cached_grad_output = gy
        m = self.macs(x.shape)
        gx = kernels.conv2d_backward_input(
            self.w.data, gy, x.shape[2], x.shape[3], self.stride, self.pad
        )
        _meter(ledger, bits, mult=m, add=m, move=gy.size + self.w.data.size + gx.size)
        # under the sign-predicting optimizer this gradient is only the
        # full-precision reference; the optimizer meters its own g_w cost
        self.w.grad = self.weight_grad(x, gy)
        if accumulate_weight_grad:
            _meter(ledger, bits, mult=m, add=m, move=x.size + gy.size + self.w.data.size)
        return gx

    def weight_grad(self, x, gy):
        return kernels.conv2d_backward_weight(x, gy, self.k, self.stride, self.pad)

    def weight_grad_cost(self):
        """(entries in g_w, inner-product length per entry) for the last pass."""
        if self.cached_grad_output is None:
            raise StateError("no cached backward pass")
        n, _, ho, wo = self.cached_grad_output.shape
        return self.w.data.size, n * ho * wo


class Dense:
    def __init__(self, din, dout, rng=None, bias=True):
        rng = rng or np.random.default_rng()
        std = np.sqrt(2.0 / din)
        self.w = Parameter("w", rng.normal(0.0, std, (dout, din)), layer=self)
        self.b = Parameter("b", np.zeros(dout)) if bias else None
        self.cached_input = None
        self.cached_grad_output = None

    def params(self):
        return [self.w] + ([self.b] if self.b is not None else [])

    def forward(self, x, ledger=None, bits=32):
        if x.ndim != 2 or x.shape[1] != self.w.data.shape[1]:
            raise ShapeError(
                f"dense input axis 1 must be {self.w.data.shape[1]}, got shape {x.shape}"
            )
        y = x @ self.w.data.T
        if self.b is not None:
            y = y + self.b.data
        self.cached_input = x
        self.cached_grad_output = None
        m = x.shape[0] * self.w.data.size
        _meter(ledger, bits, mult=m, add=m + y.size, move=x.size + self.w.data.size + y.size)
        return y

    def backward(self, gy, ledger=None, bits=32, accumulate_weight_grad=True):
        x = self.cached_input
        if x is None:
            raise StateError("Dense.backward called before forward")
        self.cached_grad_output = gy
        gx = gy @ self.w.data
        m = x.shape[0] * self.w.data.size
        _meter(ledger, bits, mult=m, add=m, move=gy.size + self.w.data.size + gx.size)
        self.w.grad = self.weight_grad(x, gy)
        if accumulate_weight_grad:
            _meter(ledger, bits, mult=m, add=m, move=x.size + gy.size + self.w.data.size)
        if self.b is not None:
            self.b.grad = gy.sum(axis=0)
            _meter(ledger, bits, add=gy.size, move=gy.size)
        return gx

    def weight_grad(self, x, gy):
        return gy.T @ x

    def weight_grad_cost(self):
        if self.cached_grad_output is None:
            raise StateError("no cached backward pass")
        return self.w.data.size, self.cached_grad_output.shape[0]


class ReLU:
    def __init__(self):
        self._mask = None

    def params(self):
        return []

    def forward(self, x, ledger=None, bits=32):
        self._mask = x > 0
        _meter(ledger, bits, add=x.size, move=2 * x.size)
        return np.where(self._mask, x, 0.0)

    def backward(self, gy, ledger=None, bits=32):
        if self._mask is None:
            raise StateError("ReLU.backward called before forward")
        _meter(ledger, bits, mult=gy.size, move=2 * gy.size)
        return np.where(self._mask, gy, 0.0)


class BatchNorm2d:
    def __init__(self, channels, momentum=0.9, eps=1e-5):
        self.gamma = Parameter("gamma", np.ones(channels))
        self.beta = Parameter("beta", np.zeros(channels))
        self.momentum = momentum
        self.eps = eps
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self._cache = None

    def params(self):
        return [self.gamma, self.beta]

    def forward(self, x, ledger=None, bits=32, train=True):
        if x.ndim != 4 or x.shape[1] != self.gamma.data.size:
            raise ShapeError(
                f"batchnorm channel axis must be {self.gamma.data.size}, got shape {x.shape}"
            )
        if train:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            m = x.shape[0] * x.shape[2] * x.shape[3]
            if m > 1:
                unbiased = var * m / (m - 1)
            else:
                unbiased = var
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * unbiased
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[:, None, None]) * inv_std[:, None, None]
        y = self.gamma.data[:, None, None] * xhat + self.beta.data[:, None, None]
        self._cache = (xhat, inv_std) if train else None
        _meter(ledger, bits, mult=2 * x.size, add=2 * x.size, move=2 * x.size)
        return y

    def backward(self, gy, ledger=None, bits=32):
        if self._cache is None:
            raise StateError("BatchNorm2d.backward called before a training forward")
        xhat, inv_std = self._cache
        m = gy.shape[0] * gy.shape[2] * gy.shape[3]
        self.gamma.grad = (gy * xhat).sum(axis=(0, 2, 3))
        self.beta.grad = gy.sum(axis=(0, 2, 3))
        g = self.gamma.data[:, None, None] * inv_std[:, None, None]
        gx = g * (gy
                  - self.beta.grad[:, None, None] / m
                  - xhat * self.gamma.grad[:, None, None] / m)
        _meter(ledger, bits, mult=3 * gy.size, add=3 * gy.size, move=2 * gy.size)
        return gx


class GlobalAvgPool:
    def __init__(self):
        self._in_shape = None

    def params(self):
        return []

    def forward(self, x, ledger=None, bits=32):
        self._in_shape = x.shape
        _meter(ledger, bits, add=x.size, move=x.size)
        return x.mean(axis=(2, 3))

    def backward(self, gy, ledger=None, bits=32):
        if self._in_shape is None:
            raise StateError("GlobalAvgPool.backward called before forward")
        n, c, h, w = self._in_shape
        gx = np.broadcast_to(gy[:, :, None, None] / (h * w), self._in_shape).copy()
        _meter(ledger, bits, mult=gx.size, move=gx.size)
        return gx
