import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bitscope import approx, arrays
from bitscope.errors import FormatError, ShapeError
from bitscope.numerics import BINARY, FixedFormat, FloatFormat, QValue, quantize, to_real

from oracles import cfpu_reference, drum_reference, fixed_round, float_values, pm1_dot


# -- H multiplier -------------------------------------------------------------------

def test_drum_truncate_examples():
    assert approx.drum_truncate(0b1011_0110, 4) == (0b1011, 4)
    assert approx.drum_truncate(0b1000_0000, 4) == (0b1001, 4)
    assert approx.drum_truncate(0b0111, 4) == (0b0111, 0)


@pytest.mark.parametrize("t", [2, 3, 4, 6])
def test_drum_product_matches_reference(t):
    for a in range(0, 256, 3):
        for b in range(0, 256, 5):
            assert approx.drum_product(a, b, t) == drum_reference(a, b, t)


def test_drum_exact_for_short_operands():
    for a in range(64):
        for b in range(64):
            assert approx.drum_product(a, b, 6) == a * b


def test_drum_mul_scalar():
    fmt = FixedFormat(4, 4)
    cfg = approx.ApproxFixedMulConfig(fmt, 4)
    for ra in range(0, 1 << 9, 7):
        for rb in range(0, 1 << 9, 11):
            a, b = QValue(fmt, ra), QValue(fmt, rb)
            ma, mb = ra & 0xFF, rb & 0xFF
            want = fixed_round(Fraction(drum_reference(ma, mb, 4), 1 << 8), 4, 4)
            if (ra >> 8) ^ (rb >> 8):
                want = -want
            assert to_real(approx.drum_mul(a, b, cfg)) == want


def test_drum_config_checks():
    with pytest.raises(FormatError):
        approx.ApproxFixedMulConfig(FixedFormat(2, 2), 5)
    with pytest.raises(FormatError):
        approx.ApproxFixedMulConfig(FixedFormat(2, 2), 1)
    cfg = approx.ApproxFixedMulConfig(FixedFormat(2, 2), 3)
    assert str(cfg) == "H(2,2,3)"
    with pytest.raises(FormatError):
        approx.drum_mul(QValue(FixedFormat(2, 3), 1), QValue(FixedFormat(2, 2), 1), cfg)


def test_drum_array_matches_scalar():
    fmt = FixedFormat(5, 6)
    cfg = approx.ApproxFixedMulConfig(fmt, 5)
    rng = np.random.default_rng(0)
    ra = rng.integers(0, 1 << 12, 3000)
    rb = rng.integers(0, 1 << 12, 3000)
    a = arrays.decode(ra.astype(np.uint64), fmt)
    b = arrays.decode(rb.astype(np.uint64), fmt)
    got = approx.drum_mul_array(a, b, 6, 6, 5, fmt)
    for x, y, g, p, q in zip(ra, rb, got, a, b):
        want = float(to_real(approx.drum_mul(QValue(fmt, int(x)), QValue(fmt, int(y)), cfg)))
        assert g == want, (p, q)


# -- I multiplier -------------------------------------------------------------------

def test_cfpu_example():
    fmt = FloatFormat(4, 3)
    cfg = approx.ApproxFloatMulConfig(fmt)
    r = approx.cfpu_mul(quantize(1.5, fmt), quantize(1.5, fmt), cfg)
    # 1 + 0.5 + 0.5 carries: exponent +1, significand 1.0
    assert to_real(r) == 2
    assert str(cfg) == "I(4,3)"


def test_cfpu_identity_and_signs():
    fmt = FloatFormat(4, 5)
    cfg = approx.ApproxFloatMulConfig(fmt)
    one, mone = quantize(1.0, fmt), quantize(-1.0, fmt)
    for raw in range(1 << fmt.width):
        x = QValue(fmt, raw)
        if x.is_nan:
            continue
        assert approx.cfpu_mul(one, x, cfg) == x
        if to_real(x) != 0:
            assert to_real(approx.cfpu_mul(mone, x, cfg)) == -to_real(x)


def test_cfpu_matches_reference():
    fmt = FloatFormat(4, 3)
    cfg = approx.ApproxFloatMulConfig(fmt)
    normals = [(r, v) for r, v in float_values(4, 3) if abs(v) >= fmt.min_normal]
    for ra, va in normals:
        for rb, vb in normals:
            want = cfpu_reference(va, vb, 3)
            if not (fmt.min_normal <= abs(want) <= fmt.max_finite):
                continue
            assert to_real(approx.cfpu_mul(QValue(fmt, ra), QValue(fmt, rb), cfg)) == want


def test_cfpu_underestimates_mostly():
    # with no carry the fraction sum never exceeds the true product
    fmt = FloatFormat(5, 6)
    cfg = approx.ApproxFloatMulConfig(fmt)
    for a in (1.25, 1.125, 1.0625):
        for b in (1.25, 1.375):
            assert to_real(approx.cfpu_mul(quantize(a, fmt), quantize(b, fmt), cfg)) <= Fraction(a) * Fraction(b)


def test_cfpu_array_matches_scalar():
    fmt = FloatFormat(5, 6)
    cfg = approx.ApproxFloatMulConfig(fmt)
    rng = np.random.default_rng(2)
    ra = rng.integers(0, 1 << 12, 4000).astype(np.uint64)
    rb = rng.integers(0, 1 << 12, 4000).astype(np.uint64)
    a, b = arrays.decode(ra, fmt), arrays.decode(rb, fmt)
    got = approx.cfpu_mul_array(a, b, fmt, fmt, fmt)
    for x, y, g in zip(ra, rb, got):
        want = float(to_real(approx.cfpu_mul(QValue(fmt, int(x)), QValue(fmt, int(y)), cfg)))
        assert g == want or (math.isnan(g) and math.isnan(want))


# -- BIN ------------------------------------------------------------------------------

def test_xnor_truth_table():
    for a in (0, 1):
        for b in (0, 1):
            r = approx.xnor_mul(QValue(BINARY, a), QValue(BINARY, b))
            assert float(r) == float(QValue(BINARY, a)) * float(QValue(BINARY, b))
    with pytest.raises(FormatError):
        approx.xnor_mul(QValue(BINARY, 1), quantize(1.0, FixedFormat(1, 1)))


def test_binary_dot_inputs():
    assert approx.binary_dot([1, 0, 1], [1, 1, 1]) == 1
    assert approx.binary_dot(np.array([True, False]), np.array([True, False])) == 2
    assert approx.binary_dot([QValue(BINARY, 0)], [QValue(BINARY, 1)]) == -1
    assert approx.binary_dot([], []) == 0
    with pytest.raises(ShapeError):
        approx.binary_dot([1, 0], [1])
    with pytest.raises(ValueError):
        approx.binary_dot([2], [1])


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), max_size=300))
def test_binary_dot_property(pairs):
    a = [p[0] for p in pairs]
    b = [p[1] for p in pairs]
    d = approx.binary_dot(a, b)
    assert d == pm1_dot(a, b)
    assert (d - len(a)) % 2 == 0 and abs(d) <= len(a)


def test_xnor_array():
    a = np.array([1.0, -1.0, 1.0, -1.0])
    b = np.array([1.0, 1.0, -1.0, -1.0])
    assert np.array_equal(approx.xnor_mul_array(a, b), a * b)


# measured with the string-truncation oracle over all magnitude pairs 1..255
DRUM_MEAN_SIGNED = {4: 0.01595855985902679, 6: 0.005706850533507671}
DRUM_WORST = {4: Fraction(17, 64), 6: Fraction(65, 1024)}


@pytest.mark.parametrize("t", [4, 6])
def test_drum_error_statistics_frozen(t):
    errs = [Fraction(approx.drum_product(a, b, t) - a * b, a * b) for a in range(1, 256) for b in range(1, 256)]
    assert float(sum(errs) / len(errs)) == pytest.approx(DRUM_MEAN_SIGNED[t], rel=1e-12)
    worst = max(abs(e) for e in errs)
    assert worst == DRUM_WORST[t]
    # worst pair: both operands are 10...0, and forcing the low kept bit adds 2**-(t-1) to each
    assert worst == (1 + Fraction(1, 2 ** (t - 1))) ** 2 - 1
