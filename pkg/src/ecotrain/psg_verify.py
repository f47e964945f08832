"""Empirical check of the sign-prediction failure bound.

Each sample is a (x, g_y) pair of per-example vectors whose summed inner
product is one weight-gradient entry. The full-precision entry g_w uses
the raw values; the predictor entry g_w_msb uses their truncated low-bit
versions after power-of-two normalization into [-1, 1]. A failure is one
of three events: a spurious sign where the true gradient is zero (h0), a
negative prediction for a positive gradient (hp), or the mirror case (hn).
The failure probability is estimated with a Wilson interval and compared
against delta_x^2 * E1 + delta_gy^2 * E2, where E1/E2 are Monte-Carlo
estimates of indicator-weighted expectations over the same samples.

The E2 expression ships in two readings: `bound` pairs delta_gy^2 with
||x||^2 terms (the cross pairing used by the zero-gradient case), while
`bound_as_printed` repeats the ||g_y||^2 first term. Both are reported.
"""

import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .quant import FixedPointFormat, dynamic_scale, quantize

EVENTS = ("none", "h0", "hp", "hn")


def classify_event(g_w, g_w_msb, tau):
    """One (g_w, g_w_msb, tau) observation -> event name.

    h0: g_w == 0 and |g_w_msb| > tau
    hp: g_w > 0 and g_w_msb < -tau
    hn: g_w < 0 and g_w_msb > tau
    Everything else (including fallback-branch entries) is 'none'.
    """
    if not tau > 0:
        raise ConfigError(f"tau must be > 0, got {tau}")
    if g_w == 0 and abs(g_w_msb) > tau:
        return "h0"
    if g_w > 0 and g_w_msb < -tau:
        return "hp"
    if g_w < 0 and g_w_msb > tau:
        return "hn"
    return "none"


def wilson_interval(successes, n, z=1.96):
    if n == 0:
        return (0.0, 1.0)
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass
class BoundEstimate:
    n: int
    counts: dict
    failure_rate: float
    rate_ci: tuple
    delta_x: float
    delta_gy: float
    e1: float
    e2: float
    e2_as_printed: float
    bound: float
    bound_ci: tuple
    bound_as_printed: float
    bound_as_printed_ci: tuple
    mean_tau: float
    predicted_fraction: float
    degenerate: bool = False
    extras: dict = field(default_factory=dict)


class GaussianPairSampler:
    """I.i.d. normal (x, g_y) pairs: shape (n, batch, dim) per side."""

    def __init__(self, seed, batch=4, dim=32, sigma_x=1.0, sigma_g=1.0):
        self.seed = seed
        self.batch = batch
        self.dim = dim
        self.sigma_x = sigma_x
        self.sigma_g = sigma_g

    def groups(self, n, group_size):
        rng = np.random.default_rng(self.seed)
        left = n
        while left > 0:
            m = min(group_size, left)
            x = rng.normal(0.0, self.sigma_x, (m, self.batch, self.dim))
            g = rng.normal(0.0, self.sigma_g, (m, self.batch, self.dim))
            left -= m
            yield x, g


class SnapshotSampler:
    """Replays (x, g_y) pairs captured from training runs.

    Every weight-gradient entry of a snapshotted conv layer yields one
    sample: the input patch trace and output-gradient map that multiply
    into that entry. Entries are walked in a fixed order and cycled if more
    samples are requested than exist, so replays are deterministic.
    """

    def __init__(self, source):
        if isinstance(source, (str, os.PathLike)):
            paths = sorted(
                os.path.join(source, f) for f in os.listdir(source) if f.endswith(".npz")
            ) if os.path.isdir(source) else [source]
        else:
            paths = list(source)
        self.snapshots = []
        for path in paths:
            with np.load(path) as z:
                self.snapshots.append(
                    (z["x"], z["gy"], int(z["stride"]), int(z["pad"]))
                )

    @staticmethod
    def _entry_pairs(x, gy, stride, pad):
        n, cin, h, w = x.shape
        _, cout, ho, wo = gy.shape
        k = h + 2 * pad - stride * (ho - 1)
        if k < 1 or (h + 2 * pad - k) // stride + 1 != ho:
            raise ConfigError("snapshot shapes are not conv-consistent")
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        g_flat = gy.reshape(n, cout, ho * wo)
        for ci in range(cin):
            for kh in range(k):
                for kw in range(k):
                    patch = xp[:, ci, kh : kh + stride * ho : stride,
                               kw : kw + stride * wo : stride].reshape(n, ho * wo)
                    for co in range(cout):
                        yield patch, g_flat[:, co]

    def groups(self, n, group_size):
        if not self.snapshots:
            return
        left = n
        while left > 0:
            for x, gy, stride, pad in self.snapshots:
                xs, gs = [], []
                for patch, gvec in self._entry_pairs(x, gy, stride, pad):
                    xs.append(patch)
                    gs.append(gvec)
                    if len(xs) == min(group_size, left):
                        yield np.stack(xs), np.stack(gs)
                        left -= len(xs)
                        xs, gs = [], []
                        if left == 0:
                            return
                if xs:
                    yield np.stack(xs), np.stack(gs)
                    left -= len(xs)
                    if left <= 0:
                        return


def monte_carlo_failure_rate(sampler, act_msb_bits, grad_msb_bits, n_samples,
                             tau=None, beta=None, group_size=256):
    """Estimate the failure rate and the analytic bound over one sampler.

    Exactly one of `tau` (fixed threshold, normalized units) or `beta`
    (adaptive: beta * max |g_w_msb| per group) must be given. Samples are
    processed in groups standing in for layers: normalization scales and
    adaptive thresholds are per group.
    """
    if (tau is None) == (beta is None):
        raise ConfigError("exactly one of tau / beta must be set")
    if tau is not None and not tau > 0:
        raise ConfigError(f"tau must be > 0, got {tau}")
    if beta is not None and not 0.0 < beta < 1.0:
        raise ConfigError(f"beta must be in (0, 1), got {beta}")
    fmt_x = FixedPointFormat(act_msb_bits)
    fmt_g = FixedPointFormat(grad_msb_bits)
    delta_x, delta_gy = fmt_x.step, fmt_g.step

    counts = {e: 0 for e in EVENTS}
    n_done = 0
    n_pred = 0
    tau_sum = 0.0
    sums = {"e1": 0.0, "e2": 0.0, "e2p": 0.0,
            "b": 0.0, "b2": 0.0, "bp": 0.0, "bp2": 0.0}
    degenerate = False

    for x, g in sampler.groups(n_samples, group_size):
        m = x.shape[0]
        sx = dynamic_scale(x)
        sg_scale = dynamic_scale(g)
        xn = x / sx
        gn = g / sg_scale
        xm = quantize(xn, fmt_x).values
        gm = quantize(gn, fmt_g).values
        gw = np.einsum("snd,snd->s", xn, gn)
        gwm = np.einsum("snd,snd->s", xm, gm)
        t = beta * float(np.max(np.abs(gwm))) if beta is not None else float(tau)
        if t == 0.0:
            warnings.warn("degenerate group: all predictor gradients are zero")
            degenerate = True
            counts["none"] += m
            n_done += m
            n_pred += m
            continue
        tau_sum += t * m

        zero = gw == 0
        h0 = zero & (np.abs(gwm) > t)
        hp = (gw > 0) & (gwm < -t)
        hn = (gw < 0) & (gwm > t)
        counts["h0"] += int(h0.sum())
        counts["hp"] += int(hp.sum())
        counts["hn"] += int(hn.sum())
        counts["none"] += int(m - h0.sum() - hp.sum() - hn.sum())
        n_pred += int((np.abs(gwm) >= t).sum())

        lin = np.einsum("snd,snd->s", xn, gn - gm) + np.einsum("snd,snd->s", xn - xm, gn)
        sq_x = np.einsum("snd,snd->s", xn, xn)
        sq_g = np.einsum("snd,snd->s", gn, gn)
        nz = ~zero
        with np.errstate(divide="ignore"):
            inv_sq = np.where(nz, 1.0 / (24.0 * (lin + t) ** 2), 0.0)
        zterm = zero / (12.0 * t * t)
        e1 = sq_g * zterm + sq_g * inv_sq
        e2 = sq_x * zterm + sq_x * inv_sq
        e2p = sq_g * zterm + sq_x * inv_sq
        b = delta_x ** 2 * e1 + delta_gy ** 2 * e2
        bp = delta_x ** 2 * e1 + delta_gy ** 2 * e2p
        sums["e1"] += float(e1.sum())
        sums["e2"] += float(e2.sum())
        sums["e2p"] += float(e2p.sum())
        sums["b"] += float(b.sum())
        sums["b2"] += float((b * b).sum())
        sums["bp"] += float(bp.sum())
        sums["bp2"] += float((bp * bp).sum())
        n_done += m

    if n_done == 0:
        warnings.warn("empty sampler: nothing to estimate")
        return BoundEstimate(
            n=0, counts=counts, failure_rate=0.0, rate_ci=(0.0, 1.0),
            delta_x=delta_x, delta_gy=delta_gy, e1=0.0, e2=0.0, e2_as_printed=0.0,
            bound=0.0, bound_ci=(0.0, 0.0), bound_as_printed=0.0,
            bound_as_printed_ci=(0.0, 0.0), mean_tau=0.0, predicted_fraction=0.0,
            degenerate=True,
        )

    failures = counts["h0"] + counts["hp"] + counts["hn"]
    rate = failures / n_done

    def mean_ci(total, total_sq):
        mean = total / n_done
        var = max(0.0, total_sq / n_done - mean * mean)
        half = 1.96 * math.sqrt(var / n_done)
        return mean, (mean - half, mean + half)

    bound, bound_ci = mean_ci(sums["b"], sums["b2"])
    bound_p, bound_p_ci = mean_ci(sums["bp"], sums["bp2"])
    return BoundEstimate(
        n=n_done,
        counts=counts,
        failure_rate=rate,
        rate_ci=wilson_interval(failures, n_done),
        delta_x=delta_x,
        delta_gy=delta_gy,
        e1=sums["e1"] / n_done,
        e2=sums["e2"] / n_done,
        e2_as_printed=sums["e2p"] / n_done,
        bound=bound,
        bound_ci=bound_ci,
        bound_as_printed=bound_p,
        bound_as_printed_ci=bound_p_ci,
        mean_tau=tau_sum / n_done,
        predicted_fraction=n_pred / n_done,
        degenerate=degenerate,
    )


def capture_snapshots(config, layers, every_k_steps, out_dir):
    """Run training with (x, g_y) snapshot hooks; returns a replay sampler."""
    from . import harness  # local import: harness depends on nothing here

    cfg = harness.replace_config(config, snapshot_layers=tuple(layers),
                                 snapshot_every=every_k_steps)
    harness.run(cfg, out_dir)
    snap_dir = os.path.join(out_dir, "snapshots")
    if not layers:
        return SnapshotSampler([])
    return SnapshotSampler(snap_dir)
