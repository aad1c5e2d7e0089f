"""Approximate multipliers and the binary (XNOR) extension.

``H(i,f,t)``
    Dynamic-range truncation: each operand magnitude keeps only ``t`` bits
    starting at its leading one, the lowest kept bit is forced to 1 to unbias
    the truncation, and the short operands are multiplied exactly.
``I(e,m)``
    Floating-point multiply whose significand product ``(1+fa)(1+fb)`` is
    replaced by the fraction sum ``1 + fa + fb``.
``BIN``
    One-bit values where multiplication is XNOR and dot products reduce to
    a popcount.

Each multiplier exists in a scalar form working on :class:`QValue` and a
vectorized form working on float64 value arrays (see :mod:`bitscope.arrays`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import arrays
from .errors import FormatError, ShapeError
from .numerics import (BINARY, NEAREST_EVEN, BinaryFormat, FixedFormat, FloatFormat, QValue,
                       RoundingMode, _fixed_from_ratio, _float_from_ratio, float_mul)


@dataclass(frozen=True)
class ApproxFixedMulConfig:
    base_format: FixedFormat
    t: int

    def __post_init__(self):
        n = self.base_format.i + self.base_format.f
        if not isinstance(self.t, int) or not 2 <= self.t <= n:
            raise FormatError(f"truncation width t={self.t!r} must lie in [2, {n}] for {self.base_format}")

    def __str__(self):
        return f"H({self.base_format.i},{self.base_format.f},{self.t})"


@dataclass(frozen=True)
class ApproxFloatMulConfig:
    base_format: FloatFormat

    def __str__(self):
        return f"I({self.base_format.e},{self.base_format.m})"


# -- dynamic-range truncating multiplier --------------------------------------

def drum_truncate(mag: int, t: int) -> tuple[int, int]:
    """Return ``(kept, shift)`` with ``mag ~= kept << shift`` and ``kept < 2**t``."""
    k = mag.bit_length() - 1
    if k < t:
        return mag, 0
    shift = k - t + 1
    return (mag >> shift) | 1, shift


def drum_product(ma: int, mb: int, t: int) -> int:
    """Approximate product of two unsigned magnitudes at truncation width ``t``."""
    if ma == 0 or mb == 0:
        return 0
    ka, sa = drum_truncate(ma, t)
    kb, sb = drum_truncate(mb, t)
    return (ka * kb) << (sa + sb)


def drum_mul(a: QValue, b: QValue, cfg: ApproxFixedMulConfig,
             rm: RoundingMode = NEAREST_EVEN) -> QValue:
    fmt = cfg.base_format
    for v in (a, b):
        if v.format != fmt:
            raise FormatError(f"drum_mul expects operands in {fmt}, got {v.format}")
    nbits = fmt.i + fmt.f
    mask = (1 << nbits) - 1
    ma, mb = a.raw & mask, b.raw & mask
    if ma == 0 or mb == 0:
        return QValue(fmt, 0)
    sign = (a.raw >> nbits) ^ (b.raw >> nbits)
    return _fixed_from_ratio(sign, drum_product(ma, mb, cfg.t), 1 << (2 * fmt.f), fmt, rm)


def drum_mul_array(a, b, fa: int, fb: int, t: int, out_fmt: FixedFormat,
                   rm: RoundingMode = NEAREST_EVEN):
    """Vectorized H multiplier.

    ``a`` holds values with ``fa`` fractional bits, ``b`` values with ``fb``;
    the product is requantized into ``out_fmt``.
    """
    ma = np.abs(np.ldexp(np.asarray(a, dtype=np.float64), fa))
    mb = np.abs(np.ldexp(np.asarray(b, dtype=np.float64), fb))
    prod = _drum_trunc_array(ma, t) * _drum_trunc_array(mb, t)
    neg = np.signbit(a) != np.signbit(b)
    prod = np.where(neg, -prod, prod)
    return arrays.quantize_fixed(np.ldexp(prod, -(fa + fb)), out_fmt, rm)


def _drum_trunc_array(mag, t):
    _, ex = np.frexp(mag)
    # ex is the bit length of each magnitude
    shift = np.maximum(ex - t, 0)
    kept = np.floor(np.ldexp(mag, -shift))
    kept = np.where(shift > 0, kept - np.mod(kept, 2) + 1, kept)
    return np.ldexp(kept, shift)


# -- fraction-sum floating-point multiplier -----------------------------------

def cfpu_mul(a: QValue, b: QValue, cfg: ApproxFloatMulConfig,
             rm: RoundingMode = NEAREST_EVEN) -> QValue:
    """Approximate float multiply with ``(1+fa)(1+fb) ~= 1 + fa + fb``.

    On a carry out of the fraction sum the exponent is incremented and the
    sum is halved, rounding the dropped bit upward.  NaN, infinity, zero and
    subnormal operands use the exact product.
    """
    fmt = cfg.base_format
    for v in (a, b):
        if v.format != fmt:
            raise FormatError(f"cfpu_mul expects operands in {fmt}, got {v.format}")
    m = fmt.m
    fields = []
    for v in (a, b):
        ef = (v.raw >> m) & fmt.exp_field_max
        if ef == 0 or ef == fmt.exp_field_max:
            return float_mul(a, b, fmt, rm)
        fields.append((v.raw >> (fmt.e + m), ef - fmt.bias, v.raw & ((1 << m) - 1)))
    (sa, ea, fa), (sb, eb, fb) = fields
    s = fa + fb
    exp = ea + eb
    if s >> m:
        s = (s - (1 << m) + 1) >> 1
        exp += 1
    sig = (1 << m) + s
    shift = exp - m
    if shift >= 0:
        return _float_from_ratio(sa ^ sb, sig << shift, 1, fmt, rm)
    return _float_from_ratio(sa ^ sb, sig, 1 << -shift, fmt, rm)


def cfpu_mul_array(a, b, a_fmt: FloatFormat, b_fmt: FloatFormat, out_fmt: FloatFormat,
                   rm: RoundingMode = NEAREST_EVEN):
    """Vectorized I multiplier; ``a`` and ``b`` hold values of ``a_fmt`` and ``b_fmt``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    normal = ((np.abs(a) >= float(a_fmt.min_normal)) & (np.abs(b) >= float(b_fmt.min_normal))
              & np.isfinite(a) & np.isfinite(b))
    exact = arrays.mul(a, b, out_fmt, rm)
    ma, ea = np.frexp(np.abs(a))
    mb, eb = np.frexp(np.abs(b))
    # significands 2*mant lie in [1, 2); the unbiased exponents are ex - 1
    s = (2 * ma - 1) + (2 * mb - 1)
    exp = (ea - 1) + (eb - 1)
    carry = s >= 1
    s = np.where(carry, (s - 1) / 2, s)
    exp = exp + carry
    frac = np.floor(np.ldexp(s, out_fmt.m) + 0.5)
    with np.errstate(over="ignore", invalid="ignore"):
        approx = np.ldexp(np.ldexp(frac, -out_fmt.m) + 1, np.where(normal, exp, 0))
        approx = np.where(np.signbit(a) != np.signbit(b), -approx, approx)
        approx = arrays.quantize_float(approx, out_fmt, rm)
    return np.where(normal, approx, exact)


# -- binary / XNOR ------------------------------------------------------------

def xnor_mul(a: QValue, b: QValue) -> QValue:
    for v in (a, b):
        if not isinstance(v.format, BinaryFormat):
            raise FormatError(f"xnor_mul expects binary operands, got {v.format}")
    return QValue(BINARY, 1 ^ (a.raw ^ b.raw))


def binary_dot(a, b) -> int:
    """Dot product of two bit vectors under the +1/-1 reading of the bits.

    Accepts sequences of 0/1 ints, booleans, or binary :class:`QValue` items.
    """
    a = _bits(a)
    b = _bits(b)
    if a.shape != b.shape:
        raise ShapeError(f"binary_dot length mismatch: {a.shape[0]} vs {b.shape[0]}")
    n = a.shape[0]
    return 2 * int(np.count_nonzero(~(a ^ b))) - n


def _bits(v) -> np.ndarray:
    if isinstance(v, np.ndarray) and v.dtype == bool:
        return v.ravel()
    items = list(v)
    if items and isinstance(items[0], QValue):
        return np.array([q.raw for q in items], dtype=bool)
    arr = np.asarray(items, dtype=np.int64).ravel()
    if arr.size and (arr.min() < 0 or arr.max() > 1):
        raise ValueError("binary vectors must contain only 0 and 1")
    return arr.astype(bool)


def xnor_mul_array(a, b):
    """XNOR on +1/-1 value arrays (identical to their product)."""
    return np.where((np.asarray(a) > 0) == (np.asarray(b) > 0), 1.0, -1.0)
