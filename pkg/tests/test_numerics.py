import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bitscope.errors import FormatError, ParseError, UnrepresentableInput
from bitscope.numerics import (BINARY, TOWARD_ZERO, FixedFormat, FloatFormat, QValue,
                               binary_encode, convert, fixed_add, fixed_mul, fixed_quantize,
                               fixed_to_real, float_add, float_mul, float_quantize, float_to_real,
                               parse_literal, to_real)

from oracles import fixed_nearest, fixed_round, fixed_values, float_nearest, py_f32_bits, strtof

FI68 = FixedFormat(6, 8)
FL49 = FloatFormat(4, 9)
FL43 = FloatFormat(4, 3)
F32 = FloatFormat(8, 23)


# -- formats ----------------------------------------------------------------------

def test_format_fields():
    assert FI68.width == 15
    assert FI68.max_value == Fraction(64) - Fraction(1, 256)
    assert str(FI68) == "FI(6,8)"
    assert F32.width == 32 and F32.bias == 127 and F32.emin == -126
    assert str(FL43) == "FL(4,3)"
    assert FL43.max_finite == 240


@pytest.mark.parametrize("args", [(0, 0), (65, 0), (-1, 3), (2.0, 3)])
def test_fixed_format_rejects(args):
    with pytest.raises(FormatError):
        FixedFormat(*args)


@pytest.mark.parametrize("args", [(1, 3), (32, 3), (4, 0), (4, 64)])
def test_float_format_rejects(args):
    with pytest.raises(FormatError):
        FloatFormat(*args)


def test_raw_width_checked():
    with pytest.raises(FormatError):
        QValue(FixedFormat(2, 2), 1 << 5)
    # fixed negative zero normalizes
    assert QValue(FixedFormat(2, 2), 1 << 4).raw == 0


# -- fixed point --------------------------------------------------------------------

def test_fixed_quantize_examples():
    v = fixed_quantize(1.5, FI68)
    assert v.raw == 384 and v.sign == 0
    assert fixed_quantize(0.0, FI68).raw == 0
    assert fixed_to_real(fixed_quantize(100.0, FI68)) == Fraction(6399609375, 10 ** 8)
    assert fixed_to_real(fixed_quantize(-100.0, FI68)) == -FI68.max_value
    v = fixed_quantize(0.1, FixedFormat(2, 4))
    assert fixed_to_real(v) == fixed_nearest(0.1, 2, 4) == Fraction(1, 8)


def test_fixed_to_real_examples():
    assert fixed_to_real(QValue(FI68, 384)) == Fraction(3, 2)
    assert fixed_to_real(QValue(FI68, 0)) == 0
    assert fixed_to_real(QValue(FixedFormat(0, 4), 1)) == Fraction(1, 16)


@pytest.mark.parametrize("x", [math.nan, math.inf, -math.inf])
def test_fixed_quantize_nonfinite(x):
    with pytest.raises(UnrepresentableInput, match="unrepresentable input"):
        fixed_quantize(x, FI68)


@pytest.mark.parametrize("i,f", [(0, 3), (2, 2), (1, 4), (3, 0)])
def test_fixed_quantize_is_nearest(i, f):
    fmt = FixedFormat(i, f)
    # every multiple of 1/64 in a range wider than the format, ties included
    for k in range(-(1 << (i + 7)), (1 << (i + 7)) + 1):
        x = Fraction(k, 64)
        assert fixed_to_real(fixed_quantize(x, fmt)) == fixed_nearest(x, i, f)


def test_fixed_oracles_agree():
    for k in range(-300, 301):
        x = Fraction(k, 37)
        assert fixed_nearest(x, 2, 3) == fixed_round(x, 2, 3)


def test_fixed_toward_zero():
    fmt = FixedFormat(2, 2)
    assert fixed_to_real(fixed_quantize(0.49, fmt, TOWARD_ZERO)) == Fraction(1, 4)
    assert fixed_to_real(fixed_quantize(-0.49, fmt, TOWARD_ZERO)) == Fraction(-1, 4)
    assert fixed_to_real(fixed_quantize(9.0, fmt, TOWARD_ZERO)) == Fraction(15, 4)


def test_fixed_add_mul_examples():
    a, b = fixed_quantize(1.5, FI68), fixed_quantize(1.25, FI68)
    assert fixed_to_real(fixed_add(a, b, FI68)) == Fraction(11, 4)
    fi22 = FixedFormat(2, 2)
    top = QValue(fi22, 15)
    assert fixed_to_real(fixed_add(top, top, fi22)) == Fraction(15, 4)
    assert fixed_to_real(fixed_mul(a, fixed_quantize(2, FI68), FI68)) == 3


def test_fixed_add_exhaustive_fi22():
    fmt = FixedFormat(2, 2)
    vals = fixed_values(2, 2)
    for ra, va in vals:
        for rb, vb in vals:
            got = fixed_add(QValue(fmt, ra), QValue(fmt, rb), fmt)
            assert fixed_to_real(got) == fixed_nearest(va + vb, 2, 2)


def test_fixed_mul_exhaustive_fi33():
    fmt = FixedFormat(3, 3)
    vals = fixed_values(3, 3)
    for ra, va in vals:
        qa = QValue(fmt, ra)
        for rb, vb in vals:
            assert fixed_to_real(fixed_mul(qa, QValue(fmt, rb), fmt)) == fixed_round(va * vb, 3, 3)


def test_fixed_mul_zero_absorbs():
    zero = QValue(FI68, 0)
    for raw in range(0, 1 << 15, 97):
        assert fixed_mul(QValue(FI68, raw), zero, FI68).raw == 0


def test_fixed_mixed_formats():
    a = fixed_quantize(1.75, FixedFormat(1, 2))
    b = fixed_quantize(0.3125, FixedFormat(0, 4))
    assert fixed_to_real(fixed_add(a, b, FixedFormat(2, 4))) == Fraction(33, 16)
    assert fixed_to_real(fixed_mul(a, b, FixedFormat(2, 6))) == Fraction(35, 64)


reals = st.fractions(min_value=-200, max_value=200, max_denominator=1 << 12)


@given(reals, reals)
def test_fixed_monotone(x, y):
    lo, hi = min(x, y), max(x, y)
    assert fixed_to_real(fixed_quantize(lo, FI68)) <= fixed_to_real(fixed_quantize(hi, FI68))


@given(st.integers(0, (1 << 9) - 1), st.integers(0, (1 << 9) - 1),
       st.sampled_from([(2, 6), (4, 4), (0, 8)]))
def test_fixed_saturation_bound(ra, rb, fmt_args):
    fmt = FixedFormat(*fmt_args)
    a, b = QValue(fmt, ra), QValue(fmt, rb)
    for r in (fixed_add(a, b, fmt), fixed_mul(a, b, fmt)):
        assert abs(fixed_to_real(r)) <= fmt.max_value


# -- floating point ---------------------------------------------------------------

def test_float_quantize_examples():
    one = float_quantize(1.0, FL43)
    assert one.raw == (7 << 3)
    assert float_quantize(2.0 ** 20, FL43).is_inf
    assert float_quantize(-2.0 ** 20, FL43).sign == 1
    assert float_quantize(math.nan, FL43).is_nan


@pytest.mark.parametrize("e,m", [(2, 1), (3, 2), (4, 3), (3, 4)])
def test_float_quantize_is_nearest_even(e, m):
    fmt = FloatFormat(e, m)
    top = float(fmt.max_finite) * 1.2
    # dyadic grid fine enough to hit every midpoint of the format
    step = Fraction(1, 1 << (m + 2 + fmt.bias))
    n = int(Fraction(top) / step)
    for k in range(-n, n + 1, max(1, n // 3000)):
        x = k * step
        want = float_nearest(x, e, m)
        got = to_real(float_quantize(x, fmt))
        assert got == want, (x, got, want)


def test_float_subnormals_and_signed_zero():
    tiny = float(FL43.min_subnormal)
    assert float_to_real(float_quantize(tiny, FL43)) == FL43.min_subnormal
    assert float_quantize(tiny / 2, FL43).raw == 0          # tie to even: zero
    assert float_quantize(-tiny / 2, FL43).raw == 1 << 7    # negative zero
    assert float_quantize(tiny * 0.75, FL43).raw == 1


def test_float_host_equivalence_sample():
    rng = np.random.default_rng(1)
    xs = np.concatenate([rng.standard_normal(2000) * 10.0 ** rng.integers(-45, 39, 2000),
                         [0.0, -0.0, 1e-46, 3.4028235677973366e38, 3.5e38, -1e-40]])
    with np.errstate(over="ignore"):
        host = xs.astype(np.float32)
    for x, h in zip(xs, host):
        assert float_quantize(float(x), F32).raw == py_f32_bits(float(h))


def test_float_add_mul_specials():
    inf, ninf = float_quantize(math.inf, F32), float_quantize(-math.inf, F32)
    nan = float_quantize(math.nan, F32)
    zero, nzero = float_quantize(0.0, F32), float_quantize(-0.0, F32)
    one = float_quantize(1.0, F32)
    assert float_add(inf, ninf, F32).is_nan
    assert float_add(inf, one, F32) == inf
    assert float_add(nan, one, F32).is_nan
    assert float_mul(inf, zero, F32).is_nan
    assert float_mul(ninf, one, F32) == ninf
    assert float_add(nzero, nzero, F32) == nzero
    assert float_add(zero, nzero, F32) == zero
    assert float_add(one, -one, F32) == zero
    assert float_mul(nzero, one, F32) == nzero


@given(st.integers(0, (1 << 14) - 1))
def test_float_mul_identity(raw):
    fmt = FloatFormat(5, 8)
    x = QValue(fmt, raw)
    r = float_mul(float_quantize(1.0, fmt), x, fmt)
    if x.is_nan:
        assert r.is_nan
    else:
        assert r == x


@given(st.integers(0, 255), st.integers(0, 255))
def test_float_add_mul_small_exact_oracle(ra, rb):
    a, b = QValue(FL43, ra), QValue(FL43, rb)
    if not (a.is_finite and b.is_finite):
        return
    va, vb = to_real(a), to_real(b)
    for got, exact in ((float_add(a, b, FL43), va + vb), (float_mul(a, b, FL43), va * vb)):
        want = float_nearest(exact, 4, 3)
        assert to_real(got) == want
        if want == 0 and exact != 0:
            assert got.sign == (exact < 0)


def test_float_toward_zero_overflow():
    r = float_quantize(1e9, FL43, TOWARD_ZERO)
    assert float_to_real(r) == FL43.max_finite
    assert float_to_real(float_quantize(1.99, FL43, TOWARD_ZERO)) == Fraction(15, 8)


# -- conversion -----------------------------------------------------------------

def test_convert_examples():
    v = fixed_quantize(1.5, FI68)
    w = convert(v, FL49)
    assert to_real(w) == Fraction(3, 2)
    assert to_real(convert(w, FI68)) == Fraction(3, 2)
    nan = float_quantize(math.nan, FL49)
    assert fixed_to_real(convert(nan, FI68)) == Fraction(6399609375, 10 ** 8)
    ninf = float_quantize(-math.inf, FL49)
    assert fixed_to_real(convert(ninf, FI68)) == -FI68.max_value
    assert convert(v, FI68) is v


@given(st.integers(0, (1 << 14) - 1))
def test_convert_roundtrip_composes(raw):
    x = QValue(FL49, raw)
    if not x.is_finite:
        return
    via = convert(convert(x, FI68), FL49)
    want = float_quantize(fixed_round(to_real(x), 6, 8), FL49)
    assert via == want


@given(st.integers(0, (1 << 15) - 1),
       st.sampled_from([FixedFormat(2, 3), FixedFormat(6, 8), FloatFormat(3, 2), FloatFormat(5, 10), BINARY]))
def test_convert_idempotent(raw, fmt):
    x = QValue(FloatFormat(5, 9), raw)
    once = convert(x, fmt)
    assert convert(once, fmt) == once


# -- literals -----------------------------------------------------------------------

def test_parse_literal_examples():
    assert parse_literal("1.5", FI68).raw == 384
    assert parse_literal("-0", FI68).raw == 0
    assert parse_literal("-0", F32).raw == 1 << 31
    assert parse_literal("0.1", F32).raw == py_f32_bits(strtof("0.1"))
    assert parse_literal("1e-50", F32).raw == 0
    assert parse_literal("-1e50", F32).raw == py_f32_bits(-math.inf)
    assert parse_literal("1e999999", FI68).raw == FI68.max_raw_magnitude
    assert parse_literal("  +2.5E+1 ", FI68).raw == 25 * 256
    assert parse_literal("nan", F32).is_nan
    assert parse_literal("-inf", F32).is_inf


@pytest.mark.parametrize("s", ["", "1.2.3", "abc", "1e", "--1", "0x10", "1,5", ". "])
def test_parse_literal_rejects(s):
    with pytest.raises(ParseError):
        parse_literal(s, FI68)


def test_parse_nonfinite_into_fixed():
    with pytest.raises(UnrepresentableInput):
        parse_literal("inf", FI68)


@given(st.decimals(allow_nan=False, allow_infinity=False, places=None).map(str))
@settings(max_examples=300)
def test_parse_matches_strtof(s):
    assert parse_literal(s, F32).raw == py_f32_bits(strtof(s))


# -- QValue ---------------------------------------------------------------------------

def test_qvalue_constructors_and_ops():
    a = QValue.of("1.5", FI68)
    b = QValue.of(2, FI68)
    c = QValue.of(Fraction(1, 4), FI68)
    assert float(a + b) == 3.5
    assert float(a - c) == 1.25
    assert float(a * b) == 3.0
    assert float(-a) == -1.5
    assert c < a <= a and b > a >= c
    nan = QValue.of(math.nan, F32)
    assert not (nan < nan) and not (nan >= nan)
    assert "FI(6,8)" in repr(a)


def test_binary_encode():
    assert binary_encode(0.3).raw == 1
    assert binary_encode(-2).raw == 0
    assert binary_encode(0.0).raw == 1
    assert float(QValue(BINARY, 0)) == -1 and float(QValue(BINARY, 1)) == 1
