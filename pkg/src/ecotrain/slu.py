"""Input-dependent layer gating: shared recurrent gate, complexity loss.

One GateNetwork instance serves every block: batch-pooled features are
projected to 10 dims, run through a 10-unit LSTM cell whose state carries
across blocks within a forward pass, and squashed to a keep probability.
Training samples hard keep/skip decisions from the probability and routes
gradients through the soft probability (straight-through); evaluation
thresholds at 0.5 (ties keep the block).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, StateError
from .layers import Parameter, _meter


@dataclass
class GateDecision:
    prob: float
    keep: bool
    block_index: int


@dataclass
class SluLossParts:
    task_loss: float
    complexity_cost: float
    alpha: float

    @property
    def total(self):
        return self.task_loss + self.alpha * self.complexity_cost


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


class LstmCell:
    """Single LSTM cell; gate slab order is [input, forget, cell, output]."""

    def __init__(self, input_dim, hidden_dim, rng):
        s = 1.0 / np.sqrt(hidden_dim)
        self.hidden_dim = hidden_dim
        self.wx = Parameter("lstm.wx", rng.uniform(-s, s, (4 * hidden_dim, input_dim)))
        self.wh = Parameter("lstm.wh", rng.uniform(-s, s, (4 * hidden_dim, hidden_dim)))
        self.b = Parameter("lstm.b", np.zeros(4 * hidden_dim))

    def params(self):
        return [self.wx, self.wh, self.b]

    def forward(self, u, h, c):
        z = self.wx.data @ u + self.wh.data @ h + self.b.data
        hd = self.hidden_dim
        i = _sigmoid(z[:hd])
        f = _sigmoid(z[hd:2 * hd])
        g = np.tanh(z[2 * hd:3 * hd])
        o = _sigmoid(z[3 * hd:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        cache = (u, h, c, i, f, g, o, tc)
        return h_new, c_new, cache

    def backward(self, dh, dc, cache):
        u, h, c, i, f, g, o, tc = cache
        do = dh * tc
        dct = dh * o * (1 - tc * tc) + dc
        di = dct * g
        df = dct * c
        dg = dct * i
        dc_prev = dct * f
        dz = np.concatenate([
            di * i * (1 - i),
            df * f * (1 - f),
            dg * (1 - g * g),
            do * o * (1 - o),
        ])
        self.wx.grad = self.wx.grad + np.outer(dz, u) if self.wx.grad is not None else np.outer(dz, u)
        self.wh.grad = self.wh.grad + np.outer(dz, h) if self.wh.grad is not None else np.outer(dz, h)
        self.b.grad = self.b.grad + dz if self.b.grad is not None else dz.copy()
        du = self.wx.data.T @ dz
        dh_prev = self.wh.data.T @ dz
        return du, dh_prev, dc_prev

    def macs(self, input_dim):
        return 4 * self.hidden_dim * (input_dim + self.hidden_dim)


class GateNetwork:
    """Shared gate: pooled features -> 10-d projection -> LSTM -> sigmoid."""

    EMBED = 10

    def __init__(self, in_features, rng=None, hidden=10, keep_bias=2.0):
        rng = rng or np.random.default_rng(0)
        self.in_features = in_features
        s = 1.0 / np.sqrt(in_features)
        self.proj_w = Parameter("gate.proj_w", rng.uniform(-s, s, (self.EMBED, in_features)))
        self.proj_b = Parameter("gate.proj_b", np.zeros(self.EMBED))
        self.lstm = LstmCell(self.EMBED, hidden, rng)
        # blocks start biased open so the trunk can learn before pruning bites
        self.head_w = Parameter("gate.head_w", np.zeros(hidden))
        self.head_b = Parameter("gate.head_b", np.array([float(keep_bias)]))
        self.hidden = hidden

    def params(self):
        return [self.proj_w, self.proj_b, *self.lstm.params(), self.head_w, self.head_b]

    def zero_grads(self):
        for p in self.params():
            p.grad = None

    def init_state(self):
        return np.zeros(self.hidden), np.zeros(self.hidden)

    def forward(self, features, state):
        """One gate query. Returns (prob, new_state, cache)."""
        if features.shape != (self.in_features,):
            raise ConfigError(
                f"gate expects pooled features of shape ({self.in_features},), got {features.shape}"
            )
        u = self.proj_w.data @ features + self.proj_b.data
        h, c, lstm_cache = self.lstm.forward(u, *state)
        z = float(self.head_w.data @ h + self.head_b.data[0])
        prob = float(_sigmoid(z))
        cache = (features, h, prob, lstm_cache)
        return prob, (h, c), cache

    def backward_step(self, dprob, cache, dh_next, dc_next):
        """One reverse BPTT step. Accumulates parameter gradients and
        returns (dfeatures, dh_prev, dc_prev) for earlier gate calls."""
        features, h, prob, lstm_cache = cache
        dz = dprob * prob * (1.0 - prob)
        hw_grad = dz * h
        self.head_w.grad = self.head_w.grad + hw_grad if self.head_w.grad is not None else hw_grad
        hb_grad = np.array([dz])
        self.head_b.grad = self.head_b.grad + hb_grad if self.head_b.grad is not None else hb_grad
        dh = dz * self.head_w.data + dh_next
        du, dh_prev, dc_prev = self.lstm.backward(dh, dc_next, lstm_cache)
        pw_grad = np.outer(du, features)
        self.proj_w.grad = self.proj_w.grad + pw_grad if self.proj_w.grad is not None else pw_grad
        self.proj_b.grad = self.proj_b.grad + du if self.proj_b.grad is not None else du.copy()
        dfeatures = self.proj_w.data.T @ du
        return dfeatures, dh_prev, dc_prev

    def backward(self, dprobs, caches):
        """BPTT across the block sequence, newest cache last. Gradients stop
        at the gate inputs (use slu.joint_backward to continue into the
        trunk)."""
        if len(dprobs) != len(caches):
            raise StateError("one upstream gradient per cached gate call required")
        dh_next = np.zeros(self.hidden)
        dc_next = np.zeros(self.hidden)
        for dprob, cache in zip(reversed(dprobs), reversed(caches)):
            _, dh_next, dc_next = self.backward_step(dprob, cache, dh_next, dc_next)

    def flops_per_call(self):
        macs = self.EMBED * self.in_features + self.lstm.macs(self.EMBED) + self.hidden
        return 2 * macs

    def meter(self, ledger, bits=32):
        macs = self.EMBED * self.in_features + self.lstm.macs(self.EMBED) + self.hidden
        _meter(ledger, bits, mult=macs, add=macs, move=self.in_features + 3 * self.hidden)


def gate_forward(block_input, gate: GateNetwork, state, block_index=0,
                 mode="deterministic", rng=None, ledger=None):
    """Pool a block input over batch and space, query the gate, decide.

    The pooled features are treated as constants (no gradient flows back
    into the trunk through the gate).
    """
    pooled = block_input.mean(axis=(0, 2, 3))
    prob, new_state, cache = gate.forward(pooled, state)
    if mode == "deterministic":
        keep = prob >= 0.5
    elif mode == "sample":
        if rng is None:
            raise ConfigError("sampling mode needs the run's seeded rng")
        keep = bool(rng.random() < prob)
    else:
        raise ConfigError(f"unknown gate mode {mode!r}")
    gate.meter(ledger)
    return GateDecision(prob=prob, keep=keep, block_index=block_index), new_state, cache


def select_layers(decisions, num_blocks=None):
    """Keep/skip mask from gate decisions, one per gated block."""
    if num_blocks is not None and len(decisions) != num_blocks:
        raise ConfigError(f"got {len(decisions)} decisions for {num_blocks} blocks")
    return [d.keep for d in decisions]


def slu_total_loss(task_loss, kept, per_block_flops, alpha) -> SluLossParts:
    """Complexity-regularized objective: task loss + alpha * C.

    C is the FLOPs of the kept blocks over the FLOPs of all blocks; with
    soft probabilities in place of the mask it is the differentiable
    relaxation used for the gate gradient.
    """
    if alpha < 0:
        raise ConfigError(f"alpha must be >= 0, got {alpha}")
    if len(kept) != len(per_block_flops):
        raise ConfigError(
            f"got {len(kept)} gate values for {len(per_block_flops)} blocks"
        )
    total_flops = float(sum(per_block_flops))
    kept_flops = float(sum(k * f for k, f in zip(kept, per_block_flops)))
    return SluLossParts(
        task_loss=float(task_loss),
        complexity_cost=kept_flops / total_flops,
        alpha=float(alpha),
    )


def complexity_grad_wrt_probs(per_block_flops, alpha):
    """d(alpha * C_soft)/d(prob_b) = alpha * f_b / sum(f)."""
    total = float(sum(per_block_flops))
    return [alpha * f / total for f in per_block_flops]


def joint_backward(net, gate: GateNetwork, g_logits, caches, dprob_extra,
                   ledger=None, bits=32, accumulate_weight_grad=True):
    """Reverse sweep through blocks and their gate calls together.

    Each keep probability is differentiated straight-through (the executed
    gain stands in for the prob), and the gate's own input path is live:
    gradient flows from later gates into earlier block outputs through the
    pooled features. dprob_extra carries the complexity-term gradient per
    block. Returns the per-block total d(objective)/d(prob).
    """
    if len(caches) != len(net.blocks) or len(dprob_extra) != len(net.blocks):
        raise StateError("one gate cache and one extra gradient per block required")
    g = net.backward_head(g_logits, ledger, bits, accumulate_weight_grad)
    dh = np.zeros(gate.hidden)
    dc = np.zeros(gate.hidden)
    dprobs = [0.0] * len(net.blocks)
    for i in range(len(net.blocks) - 1, -1, -1):
        g, dgain = net.backward_block(i, g, ledger, bits, accumulate_weight_grad)
        dprobs[i] = dgain + dprob_extra[i]
        dfeat, dh, dc = gate.backward_step(dprobs[i], caches[i], dh, dc)
        n, _, hh, ww = g.shape
        g = g + dfeat[None, :, None, None] / (n * hh * ww)
        _meter(ledger, bits, add=g.size, move=g.size)
    net.backward_stem(g, ledger, bits, accumulate_weight_grad)
    return dprobs
