"""Update rules: SGD with momentum, SignSGD, predictive sign steps, SWA.

The predictive sign rule resolves each weight-gradient entry from a cheap
low-bit gradient predictor when the predicted magnitude clears an adaptive
threshold (beta times the layer's max predicted magnitude), and falls back
to the quantized full-width gradient otherwise. sgn(0) = 0 everywhere: a
zero gradient leaves the weight alone (up to weight decay).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .quant import FixedPointFormat, dynamic_scale, msb_split, quantize


def sgd_step(w, g, lr, momentum=0.0, weight_decay=0.0, velocity=None):
    """v' = momentum*v + g + wd*w;  w' = w - lr*v'. Returns (w', v')."""
    if w.shape != g.shape:
        raise ConfigError(f"shape mismatch: w {w.shape} vs g {g.shape}")
    if velocity is None:
        velocity = np.zeros_like(w)
    v = momentum * velocity + g + weight_decay * w
    return w - lr * v, v


def signsgd_step(w, g, lr, weight_decay=0.0):
    """w' = w - lr*(sgn(g) + wd*w), decoupled weight decay."""
    if w.shape != g.shape:
        raise ConfigError(f"shape mismatch: w {w.shape} vs g {g.shape}")
    return w - lr * (np.sign(g) + weight_decay * w)


def swa_update(avg, w, n):
    """Running arithmetic mean: returns (avg', n+1)."""
    if n < 0:
        raise ConfigError(f"n must be >= 0, got {n}")
    return (avg * n + w) / (n + 1), n + 1


@dataclass(frozen=True)
class PsgFormats:
    """Full and predictor bit widths for activations and output gradients."""

    act_bits: int = 8
    act_msb_bits: int = 4
    grad_bits: int = 16
    grad_msb_bits: int = 10

    def __post_init__(self):
        if self.act_msb_bits >= self.act_bits:
            raise ConfigError("activation predictor bits must be < full bits")
        if self.grad_msb_bits >= self.grad_bits:
            raise ConfigError("gradient predictor bits must be < full bits")


@dataclass
class PsgStepStats:
    predicted_fraction: float
    fallback_fraction: float
    flip_count: int
    total_entries: int
    per_layer: list = field(default_factory=list)


def psg_weight_grad(x, g_y, weight_grad_fn, formats: PsgFormats, beta,
                    ledger=None, macs_per_entry=None):
    """Sign-predicted weight gradient for one layer.

    x and g_y are the layer's cached forward input and output gradient;
    weight_grad_fn is the layer's inner-product accumulation. Returns
    (signs, predicted_mask, tau). The ledger is charged predictor-precision
    cost for every entry plus full-precision cost for fallback entries only
    (the predictor accumulation is a bit-prefix of the full one).
    """
    if not 0.0 < beta < 1.0:
        raise ConfigError(f"beta must be in (0, 1), got {beta}")
    act_fmt = FixedPointFormat(formats.act_bits)
    act_msb_fmt = FixedPointFormat(formats.act_msb_bits)
    grad_fmt = FixedPointFormat(formats.grad_bits)
    grad_msb_fmt = FixedPointFormat(formats.grad_msb_bits)

    sx = dynamic_scale(x)
    sg = dynamic_scale(g_y)
    x_msb, _ = msb_split(x, act_fmt, act_msb_fmt, sx)
    g_msb, _ = msb_split(g_y, grad_fmt, grad_msb_fmt, sg)
    gw_msb = weight_grad_fn(x_msb.values, g_msb.values)
    tau = beta * float(np.max(np.abs(gw_msb)))
    predicted = np.abs(gw_msb) >= tau  # tau == 0: every entry predicted

    x_q = quantize(x, act_fmt, sx)
    g_q = quantize(g_y, grad_fmt, sg)
    gw_fallback = weight_grad_fn(x_q.values, g_q.values)
    signs = np.where(predicted, np.sign(gw_msb), np.sign(gw_fallback))

    if ledger is not None and macs_per_entry is not None:
        entries = int(gw_msb.size)
        n_fallback = entries - int(predicted.sum())
        pred_bits = max(formats.act_msb_bits, formats.grad_msb_bits)
        full_bits = max(formats.act_bits, formats.grad_bits)
        ledger.record("multiply", entries * macs_per_entry, pred_bits)
        ledger.record("add", entries * macs_per_entry, pred_bits)
        ledger.record("data_move", x.size + g_y.size + entries, pred_bits)
        if n_fallback:
            ledger.record("multiply", n_fallback * macs_per_entry, full_bits)
            ledger.record("add", n_fallback * macs_per_entry, full_bits)
            ledger.record("data_move", n_fallback * macs_per_entry, full_bits)
    return signs, predicted, tau


class SGD:
    def __init__(self, params, momentum=0.9, weight_decay=1e-4):
        self.params = list(params)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self._velocity = [None] * len(self.params)

    def step(self, lr, ledger=None, bits=32):
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            p.data, self._velocity[i] = sgd_step(
                p.data, p.grad, lr, self.momentum, self.weight_decay, self._velocity[i]
            )
            if ledger is not None:
                n = p.data.size
                ledger.record("multiply", 3 * n, bits)
                ledger.record("add", 3 * n, bits)
                ledger.record("data_move", 3 * n, bits)


class SignSGD:
    def __init__(self, params, weight_decay=0.0005):
        self.params = list(params)
        self.weight_decay = weight_decay

    def step(self, lr, ledger=None, bits=32):
        for p in self.params:
            if p.grad is None:
                continue
            p.data = signsgd_step(p.data, p.grad, lr, self.weight_decay)
            if ledger is not None:
                n = p.data.size
                ledger.record("multiply", 2 * n, bits)
                ledger.record("add", 2 * n, bits)
                ledger.record("data_move", 2 * n, 1)


class PSG:
    """Sign updates with low-bit gradient prediction on conv/dense weights.

    Parameters without an inner-product hook (biases, batchnorm affine)
    take plain sign steps from their full-precision gradients.
    """

    def __init__(self, params, formats: PsgFormats | None = None, beta=0.05,
                 weight_decay=0.0005, ledger=None, weight_bits=8):
        if formats is None:
            formats = PsgFormats()
        if not 0.0 < beta < 1.0:
            raise ConfigError(f"beta must be in (0, 1), got {beta}")
        self.params = list(params)
        self.formats = formats
        self.beta = beta
        self.weight_decay = weight_decay
        self.ledger = ledger
        self.weight_bits = weight_bits

    def step(self, lr) -> PsgStepStats:
        predicted = 0
        total = 0
        flips = 0
        per_layer = []
        for p in self.params:
            if p.grad is None:
                continue
            layer = p.layer
            if layer is not None and layer.cached_grad_output is not None:
                entries, per_entry = layer.weight_grad_cost()
                signs, mask, tau = psg_weight_grad(
                    layer.cached_input, layer.cached_grad_output, layer.weight_grad,
                    self.formats, self.beta, self.ledger, per_entry,
                )
                predicted += int(mask.sum())
                total += entries
                per_layer.append((p.name, float(mask.mean()), tau))
                flips += int(np.sum(signs != np.sign(p.grad)))
            else:
                signs = np.sign(p.grad)
            p.data = signsgd_step(p.data, signs, lr, self.weight_decay)
            if self.ledger is not None:
                n = p.data.size
                self.ledger.record("multiply", 2 * n, self.weight_bits)
                self.ledger.record("add", 2 * n, self.weight_bits)
                self.ledger.record("data_move", 2 * n, 1)
        frac = predicted / total if total else 1.0
        return PsgStepStats(
            predicted_fraction=frac,
            fallback_fraction=1.0 - frac,
            flip_count=flips,
            total_entries=total,
            per_layer=per_layer,
        )


class SwaAverager:
    """Arithmetic mean of parameter checkpoints fed to update()."""

    def __init__(self, params):
        self.params = list(params)
        self.n = 0
        self.avg = [np.zeros_like(p.data) for p in self.params]

    def update(self):
        for i, p in enumerate(self.params):
            self.avg[i], _ = swa_update(self.avg[i], p.data, self.n)
        self.n += 1

    def load_into_params(self):
        """Overwrite live parameters with the running average."""
        if self.n == 0:
            return
        for p, a in zip(self.params, self.avg):
            p.data = a.copy()
