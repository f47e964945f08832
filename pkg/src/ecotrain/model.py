"""Residual conv nets assembled from LayerSpecs, with gateable blocks.

Blocks are pre-activation (BN-ReLU-conv-BN-ReLU-conv plus identity), so a
skipped block passes its input through bit-identically and touches neither
its parameters nor the ledger.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, ShapeError, StateError
from .layers import BatchNorm2d, Conv2d, Dense, GlobalAvgPool, ReLU, _meter

LAYER_KINDS = ("conv2d", "dense", "batchnorm", "relu", "global-avg-pool", "residual-block")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out_channels: int = 0
    kernel: int = 0
    stride: int = 1
    pad: int = 0
    units: int = 0  # dense output width

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}; valid: {LAYER_KINDS}")


def output_shape(spec: LayerSpec, in_shape):
    """Closed-form output shape for one layer applied to (C, H, W) input."""
    c, h, w = in_shape
    if spec.kind == "conv2d":
        ho = kernels.conv_out_size(h, spec.kernel, spec.stride, spec.pad)
        wo = kernels.conv_out_size(w, spec.kernel, spec.stride, spec.pad)
        if ho < 1 or wo < 1:
            raise ShapeError(f"conv output collapses on spatial axes: {ho}x{wo}")
        return (spec.out_channels, ho, wo)
    if spec.kind in ("batchnorm", "relu"):
        return in_shape
    if spec.kind == "residual-block":
        return in_shape  # identity shortcut: shapes must match
    if spec.kind == "global-avg-pool":
        return (c, 1, 1)
    if spec.kind == "dense":
        return (spec.units, 1, 1)
    raise ConfigError(f"unhandled kind {spec.kind!r}")


class ResidualBlock:
    """Pre-activation residual block: out = x + gain * F(x).

    gain is 1.0 when executed hard; a float probability in soft mode. When
    skipped the input is returned untouched and nothing is computed.
    """

    def __init__(self, channels, rng, k=3):
        self.bn1 = BatchNorm2d(channels)
        self.relu1 = ReLU()
        self.conv1 = Conv2d(channels, channels, k, stride=1, pad=k // 2, rng=rng)
        self.bn2 = BatchNorm2d(channels)
        self.relu2 = ReLU()
        self.conv2 = Conv2d(channels, channels, k, stride=1, pad=k // 2, rng=rng)
        self._executed = False
        self._gain = 1.0
        self._branch_out = None

    def params(self):
        ps = []
        for layer in (self.bn1, self.conv1, self.bn2, self.conv2):
            ps.extend(layer.params())
        return ps

    def conv_macs(self, x_shape):
        return self.conv1.macs(x_shape) + self.conv2.macs(x_shape)

    def forward_flops(self, x_shape):
        """Analytic forward FLOPs of the block body (convs + elementwise)."""
        n, c, h, w = x_shape
        size = n * c * h * w
        return 2 * self.conv_macs(x_shape) + 2 * (4 * size) + 2 * size + size

    def forward(self, x, gate=True, ledger=None, bits=32, train=True):
        if gate is False:
            self._executed = False
            return x
        gain = 1.0 if gate is True else float(gate)
        f = self.bn1.forward(x, ledger, bits, train=train)
        f = self.relu1.forward(f, ledger, bits)
        f = self.conv1.forward(f, ledger, bits)
        f = self.bn2.forward(f, ledger, bits, train=train)
        f = self.relu2.forward(f, ledger, bits)
        f = self.conv2.forward(f, ledger, bits)
        self._executed = True
        self._gain = gain
        self._branch_out = f
        _meter(ledger, bits, add=x.size, move=2 * x.size)
        return x + gain * f

    def backward(self, gy, ledger=None, bits=32, accumulate_weight_grad=True):
        """Returns (gx, dgain): dgain is d(loss)/d(gain), the gate's hook."""
        if not self._executed:
            return gy, 0.0
        dgain = float(np.sum(gy * self._branch_out))
        g = self._gain * gy
        g = self.conv2.backward(g, ledger, bits, accumulate_weight_grad)
        g = self.relu2.backward(g, ledger, bits)
        g = self.bn2.backward(g, ledger, bits)
        g = self.conv1.backward(g, ledger, bits, accumulate_weight_grad)
        g = self.relu1.backward(g, ledger, bits)
        g = self.bn1.backward(g, ledger, bits)
        _meter(ledger, bits, add=gy.size, move=2 * gy.size)
        return gy + g, dgain


class GatedConvNet:
    """Stem conv, a stack of gateable residual blocks, BN-ReLU head."""

    def __init__(self, in_shape=(3, 16, 16), num_blocks=4, width=8,
                 num_classes=10, stem_stride=2, rng=None):
        rng = rng or np.random.default_rng(0)
        cin, h, w = in_shape
        self.in_shape = in_shape
        self.stem = Conv2d(cin, width, 3, stride=stem_stride, pad=1, rng=rng)
        self.blocks = [ResidualBlock(width, rng) for _ in range(num_blocks)]
        self.final_bn = BatchNorm2d(width)
        self.final_relu = ReLU()
        self.pool = GlobalAvgPool()
        self.fc = Dense(width, num_classes, rng=rng)
        ho = kernels.conv_out_size(h, 3, stem_stride, 1)
        wo = kernels.conv_out_size(w, 3, stem_stride, 1)
        self.body_shape = (width, ho, wo)
        self.width = width
        self.num_classes = num_classes

    def params(self):
        ps = list(self.stem.params())
        for b in self.blocks:
            ps.extend(b.params())
        ps.extend(self.final_bn.params())
        ps.extend(self.fc.params())
        return ps

    def conv_layers(self):
        layers = [self.stem]
        for b in self.blocks:
            layers.extend([b.conv1, b.conv2])
        return layers

    def relu_layers(self):
        layers = []
        for b in self.blocks:
            layers.extend([b.relu1, b.relu2])
        layers.append(self.final_relu)
        return layers

    def per_block_flops(self, batch_size):
        shape = (batch_size,) + self.body_shape
        return [b.forward_flops(shape) for b in self.blocks]

    def forward(self, x, gates=None, ledger=None, bits=32, train=True):
        """gates: None (all kept), a list of bool/float per block, or a
        callable (block_index, block_input) -> bool/float queried in order,
        so each gate sees the input its block would receive."""
        if isinstance(gates, (list, tuple)) and len(gates) != len(self.blocks):
            raise ConfigError(
                f"got {len(gates)} gate decisions for {len(self.blocks)} blocks"
            )
        h = self.stem.forward(x, ledger, bits)
        for i, block in enumerate(self.blocks):
            if gates is None:
                gate = True
            elif callable(gates):
                gate = gates(i, h)
            else:
                gate = gates[i]
            h = block.forward(h, gate, ledger, bits, train=train)
        h = self.final_bn.forward(h, ledger, bits, train=train)
        h = self.final_relu.forward(h, ledger, bits)
        h = self.pool.forward(h, ledger, bits)
        return self.fc.forward(h, ledger, bits)

    def backward_head(self, g_logits, ledger=None, bits=32, accumulate_weight_grad=True):
        g = self.fc.backward(g_logits, ledger, bits, accumulate_weight_grad)
        g = self.pool.backward(g, ledger, bits)
        g = self.final_relu.backward(g, ledger, bits)
        return self.final_bn.backward(g, ledger, bits)

    def backward_block(self, i, g, ledger=None, bits=32, accumulate_weight_grad=True):
        return self.blocks[i].backward(g, ledger, bits, accumulate_weight_grad)

    def backward_stem(self, g, ledger=None, bits=32, accumulate_weight_grad=True):
        self.stem.backward(g, ledger, bits, accumulate_weight_grad)

    def backward(self, g_logits, ledger=None, bits=32, accumulate_weight_grad=True,
                 head_only=False):
        """Backprop; returns per-block d(loss)/d(gain) for the gate path."""
        if head_only:
            self.fc.backward(g_logits, ledger, bits, accumulate_weight_grad)
            return [0.0] * len(self.blocks)
        g = self.backward_head(g_logits, ledger, bits, accumulate_weight_grad)
        dgains = [0.0] * len(self.blocks)
        for i in range(len(self.blocks) - 1, -1, -1):
            g, dgains[i] = self.backward_block(i, g, ledger, bits, accumulate_weight_grad)
        self.backward_stem(g, ledger, bits, accumulate_weight_grad)
        return dgains

    def zero_grads(self):
        for p in self.params():
            p.grad = None

    def state_arrays(self):
        """All mutable float state: params plus batchnorm running stats."""
        arrays = {f"p{i}.{p.name}": p.data for i, p in enumerate(self.params())}
        bns = [self.final_bn] + [bn for b in self.blocks for bn in (b.bn1, b.bn2)]
        for i, bn in enumerate(bns):
            arrays[f"bn{i}.mean"] = bn.running_mean
            arrays[f"bn{i}.var"] = bn.running_var
        return arrays


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch; returns (loss, d loss/d logits)."""
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    p = ez / ez.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    loss = -np.mean(np.log(p[np.arange(n), labels] + 1e-300))
    g = p.copy()
    g[np.arange(n), labels] -= 1.0
    return loss, g / n


def accuracy(logits, labels):
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def finite_difference_check(model, x, labels, eps=1e-4, max_coords=8, seed=0):
    """Max relative error between analytic and central-difference gradients.

    Samples up to max_coords coordinates per parameter. A perturbation that
    flips any ReLU activation pattern leaves the linear region the analytic
    gradient describes, so such coordinates are rejected and resampled;
    everything else must agree. Uses training-mode forwards so the loss is
    a pure function of the parameters.
    """
    if not 1e-6 <= eps <= 1e-2:
        raise ConfigError(f"eps must be in [1e-6, 1e-2], got {eps}")
    rng = np.random.default_rng(seed)

    def loss_and_masks():
        logits = model.forward(x, train=True)
        masks = [r._mask for r in model.relu_layers()]
        return softmax_cross_entropy(logits, labels)[0], masks

    _, base_masks = loss_and_masks()
    logits = model.forward(x, train=True)
    _, g_logits = softmax_cross_entropy(logits, labels)
    model.backward(g_logits)

    def same_pattern(masks):
        return all(np.array_equal(a, b) for a, b in zip(masks, base_masks))

    worst = 0.0
    for p in model.params():
        flat = p.data.reshape(-1)
        gflat = p.grad.reshape(-1)
        n = flat.size
        if n <= max_coords:
            idx = np.arange(n)
        else:
            idx = rng.permutation(n)
        checked = 0
        for i in idx:
            if checked >= max_coords:
                break
            keep = flat[i]
            flat[i] = keep + eps
            up, masks_up = loss_and_masks()
            flat[i] = keep - eps
            down, masks_down = loss_and_masks()
            flat[i] = keep
            if not (same_pattern(masks_up) and same_pattern(masks_down)):
                continue  # kink crossed: central difference is off-region
            checked += 1
            cd = (up - down) / (2 * eps)
            err = abs(gflat[i] - cd) / max(abs(gflat[i]), abs(cd), 1e-8)
            worst = max(worst, err)
    return worst
