"""Fixed-point quantization simulation on top of float64.

A B-bit symmetric format covers [-R, R) in steps of delta = R * 2^(1-B).
Quantization truncates toward zero, which makes the low-bit value a bit
prefix of the high-bit one: re-quantizing a B-bit value to fewer bits gives
the same result as quantizing the original, so a cheap low-bit product can
be reused inside the full-precision accumulation.

Per-tensor dynamic scales are powers of two, so rescaling is an exact
exponent shift and never changes which level a value truncates to.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError


@dataclass(frozen=True)
class FixedPointFormat:
    """B-bit symmetric fixed point over [-range_max, range_max)."""

    bits: int
    range_max: float = 1.0

    def __post_init__(self):
        if self.bits < 1:
            raise ConfigError(f"bits must be >= 1, got {self.bits}")
        if not self.range_max > 0:
            raise ConfigError(f"range_max must be > 0, got {self.range_max}")

    @property
    def step(self) -> float:
        return self.range_max * 2.0 ** (1 - self.bits)

    @property
    def levels(self) -> int:
        return 2 ** self.bits


@dataclass(frozen=True)
class QuantizedTensor:
    values: np.ndarray = field(repr=False)
    format: FixedPointFormat
    scale: float


def quantize(x, fmt: FixedPointFormat, scale: float = 1.0) -> QuantizedTensor:
    """Truncate-toward-zero quantization with clipping to the format range.

    Each output is clip(trunc(x / (step*scale))) * step*scale, with integer
    levels clipped to [-2^(B-1), 2^(B-1) - 1].
    """
    if not scale > 0:
        raise ConfigError(f"scale must be > 0, got {scale}")
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NumericError("quantize input contains NaN or Inf")
    d = fmt.step * scale
    q = np.trunc(x / d)
    half = 2 ** (fmt.bits - 1)
    np.clip(q, -half, half - 1, out=q)
    return QuantizedTensor(q * d, fmt, scale)


def msb_split(x, full_fmt: FixedPointFormat, msb_fmt: FixedPointFormat, scale: float = 1.0):
    """Split x into its low-bit prefix and the exact remainder.

    Returns (msb, residual) with msb.values + residual == x bitwise; for x
    inside the format range, |residual| < msb_fmt.step * scale.
    """
    if msb_fmt.bits >= full_fmt.bits:
        raise ConfigError(
            f"msb bits must be < full bits, got {msb_fmt.bits} >= {full_fmt.bits}"
        )
    if msb_fmt.range_max != full_fmt.range_max:
        raise ConfigError("msb and full formats must share range_max")
    msb = quantize(x, msb_fmt, scale)
    residual = np.asarray(x, dtype=np.float64) - msb.values
    return msb, residual


def dynamic_scale(x) -> float:
    """max(|x|) rounded up to the nearest power of two; 1.0 for all zeros."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ConfigError("dynamic_scale needs a nonempty tensor")
    m = float(np.max(np.abs(x)))
    if not math.isfinite(m):
        raise NumericError("dynamic_scale input contains NaN or Inf")
    if m == 0.0:
        return 1.0
    mant, exp = math.frexp(m)  # m = mant * 2^exp, mant in [0.5, 1)
    return float(2.0 ** (exp - 1)) if mant == 0.5 else float(2.0 ** exp)
