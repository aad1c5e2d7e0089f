"""Vectorized emulation of the numeric formats on float64 arrays.

Arrays hold the *decoded values* of a format, each exactly representable in
binary64.  Every operation computes an exact (or innocuously double-rounded)
binary64 intermediate and rounds it once into the target format, matching
the scalar routines in :mod:`bitscope.numerics` bit for bit.

Exactness limits, checked by :func:`check_vector_format`:

* fixed point: ``i + f <= 26`` so operand products fit the 53-bit significand;
* floating point: ``m <= 24`` (a binary64 intermediate followed by rounding
  to ``p = m + 1 <= 25`` bits is free of double-rounding error for add and mul)
  and ``e <= 10`` so the extended range and subnormals fit binary64.
"""

import numpy as np

from .errors import FormatError
from .numerics import (BinaryFormat, FixedFormat, FloatFormat, NEAREST_EVEN, TOWARD_ZERO,
                       RoundingMode)

MAX_FIXED_BITS = 26
MAX_FLOAT_EXP = 10
MAX_FLOAT_MANT = 24


def check_vector_format(fmt):
    if isinstance(fmt, FixedFormat):
        if fmt.i + fmt.f > MAX_FIXED_BITS:
            raise FormatError(f"{fmt} is too wide for vectorized emulation (i+f <= {MAX_FIXED_BITS})")
    elif isinstance(fmt, FloatFormat):
        if fmt.e > MAX_FLOAT_EXP or fmt.m > MAX_FLOAT_MANT:
            raise FormatError(f"{fmt} is too wide for vectorized emulation "
                              f"(e <= {MAX_FLOAT_EXP}, m <= {MAX_FLOAT_MANT})")
    elif not isinstance(fmt, BinaryFormat):
        raise FormatError(f"not a numeric format: {fmt!r}")
    return fmt


def _round(x, rm):
    return np.rint(x) if rm is NEAREST_EVEN else np.trunc(x)


def quantize_fixed(x, fmt: FixedFormat, rm: RoundingMode = NEAREST_EVEN):
    """Round onto the fixed grid and saturate; NaN goes to +max, infinities to +-max."""
    x = np.asarray(x, dtype=np.float64)
    top = float(fmt.max_value)
    with np.errstate(invalid="ignore"):
        q = np.ldexp(_round(np.ldexp(np.nan_to_num(x, nan=top, posinf=top, neginf=-top), fmt.f), rm),
                     -fmt.f)
    q = np.clip(q, -top, top)
    # sign-magnitude has a single zero
    return q + 0.0


def quantize_float(x, fmt: FloatFormat, rm: RoundingMode = NEAREST_EVEN):
    """Correct rounding into FL(e, m) including subnormals, overflow and signed zero."""
    x = np.asarray(x, dtype=np.float64)
    _, ex = np.frexp(x)
    # frexp gives x = mant * 2**ex with 0.5 <= |mant| < 1, so the unbiased exponent is ex - 1
    scale = fmt.m - np.maximum(ex - 1, fmt.emin)
    with np.errstate(invalid="ignore", over="ignore"):
        q = np.ldexp(_round(np.ldexp(x, scale), rm), -scale)
        big = np.abs(q) > float(fmt.max_finite)
        if rm is TOWARD_ZERO:
            q = np.where(big & np.isfinite(x), np.copysign(float(fmt.max_finite), x), q)
        else:
            q = np.where(big, np.copysign(np.inf, x), q)
    return q


def quantize_binary(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(np.signbit(x) & (x != 0), -1.0, 1.0)


def quantize(x, fmt, rm: RoundingMode = NEAREST_EVEN):
    """Vectorized :func:`bitscope.numerics.convert` from binary64 values into ``fmt``."""
    check_vector_format(fmt)
    if isinstance(fmt, FixedFormat):
        return quantize_fixed(x, fmt, rm)
    if isinstance(fmt, FloatFormat):
        return quantize_float(x, fmt, rm)
    return quantize_binary(x)


def add(a, b, fmt, rm: RoundingMode = NEAREST_EVEN):
    if isinstance(fmt, BinaryFormat):
        raise FormatError("addition is not defined in BIN")
    with np.errstate(invalid="ignore", over="ignore"):
        s = np.add(a, b, dtype=np.float64)
    return quantize(s, fmt, rm)


def mul(a, b, fmt, rm: RoundingMode = NEAREST_EVEN):
    if isinstance(fmt, BinaryFormat):
        return np.asarray(a, dtype=np.float64) * np.asarray(b, dtype=np.float64)
    with np.errstate(invalid="ignore", over="ignore"):
        p = np.multiply(a, b, dtype=np.float64)
    return quantize(p, fmt, rm)


def encode(values, fmt):
    """Raw bit patterns (uint64) of values already representable in ``fmt``."""
    v = np.asarray(values, dtype=np.float64)
    if isinstance(fmt, BinaryFormat):
        return (v > 0).astype(np.uint64)
    if isinstance(fmt, FixedFormat):
        mag = np.abs(v) * float(1 << fmt.f)
        sign = (v < 0).astype(np.uint64)
        return (sign << np.uint64(fmt.i + fmt.f)) | mag.astype(np.uint64)
    m, e = fmt.m, fmt.e
    sign = np.signbit(v).astype(np.uint64)
    a = np.abs(v)
    mant, ex = np.frexp(a)
    normal = ((ex - 1) >= fmt.emin) & (a != 0)
    with np.errstate(invalid="ignore"):
        frac_norm = np.ldexp(mant * 2 - 1, m)
        frac_sub = np.ldexp(a, m - fmt.emin)
        frac = np.where(normal, frac_norm, frac_sub)
        ef = np.where(normal, ex - 1 + fmt.bias, 0)
    frac = np.where(np.isfinite(a), frac, 0)
    ef = np.where(np.isfinite(a), ef, fmt.exp_field_max)
    nan = np.isnan(v)
    frac = np.where(nan, 1 << (m - 1), frac)
    sign = np.where(nan, np.uint64(0), sign)
    raw = (sign << np.uint64(e + m)) | (ef.astype(np.uint64) << np.uint64(m)) | frac.astype(np.uint64)
    return raw


def decode(raw, fmt):
    """Inverse of :func:`encode`: float64 values of raw bit patterns."""
    r = np.asarray(raw, dtype=np.uint64)
    if isinstance(fmt, BinaryFormat):
        return np.where(r & np.uint64(1), 1.0, -1.0)
    if isinstance(fmt, FixedFormat):
        nb = np.uint64(fmt.i + fmt.f)
        mag = (r & np.uint64((1 << (fmt.i + fmt.f)) - 1)).astype(np.float64)
        val = np.ldexp(mag, -fmt.f)
        return np.where((r >> nb) & np.uint64(1), -val, val) + 0.0
    m = fmt.m
    sign = ((r >> np.uint64(fmt.e + m)) & np.uint64(1)).astype(bool)
    ef = ((r >> np.uint64(m)) & np.uint64(fmt.exp_field_max)).astype(np.int64)
    frac = (r & np.uint64((1 << m) - 1)).astype(np.float64)
    sub = np.ldexp(frac, fmt.emin - m)
    with np.errstate(over="ignore"):
        norm = np.ldexp(frac + float(1 << m), ef - fmt.bias - m)
    val = np.where(ef == 0, sub, norm)
    top = ef == fmt.exp_field_max
    val = np.where(top, np.where(frac == 0, np.inf, np.nan), val)
    return np.where(sign, -val, val)
