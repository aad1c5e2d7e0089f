"""Bit-exact scalar emulation of custom fixed-point and floating-point numbers.

Every value is a :class:`QValue`: a raw unsigned bit pattern plus the format
that interprets it.  Arithmetic is done exactly on integers (values of every
supported format are dyadic rationals) and rounded once into the target
format, so results never depend on the host's floating-point unit.

Fixed-point values are sign-magnitude, ``1 + i + f`` bits wide, and saturate
on overflow.  Floating-point values use an IEEE-754 style layout generalized
to ``e`` exponent and ``m`` fraction bits, with subnormals, signed zeros,
infinities and NaN.  ``FL(8,23)`` is bit-compatible with binary32.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

from .errors import FormatError, ParseError, UnrepresentableInput

__all__ = [
    "RoundingMode", "FixedFormat", "FloatFormat", "BinaryFormat", "BINARY", "QValue",
    "fixed_quantize", "fixed_to_real", "fixed_add", "fixed_mul",
    "float_quantize", "float_to_real", "float_add", "float_mul",
    "binary_encode", "quantize", "to_real", "convert", "parse_literal", "add", "mul",
]


class RoundingMode(enum.Enum):
    NEAREST_EVEN = "nearest-even"
    TOWARD_ZERO = "toward-zero"


NEAREST_EVEN = RoundingMode.NEAREST_EVEN
TOWARD_ZERO = RoundingMode.TOWARD_ZERO


@dataclass(frozen=True)
class FixedFormat:
    """Sign-magnitude fixed point with ``i`` integral and ``f`` fractional bits."""

    i: int
    f: int

    def __post_init__(self):
        for name, v in (("i", self.i), ("f", self.f)):
            if not isinstance(v, int) or isinstance(v, bool) or not 0 <= v <= 64:
                raise FormatError(f"fixed-point {name} must be an integer in [0, 64], got {v!r}")
        if self.i + self.f < 1:
            raise FormatError("fixed-point format needs at least one magnitude bit")

    @property
    def width(self) -> int:
        return 1 + self.i + self.f

    @property
    def max_raw_magnitude(self) -> int:
        return (1 << (self.i + self.f)) - 1

    @property
    def max_value(self) -> Fraction:
        return Fraction(self.max_raw_magnitude, 1 << self.f)

    @property
    def resolution(self) -> Fraction:
        return Fraction(1, 1 << self.f)

    def __str__(self):
        return f"FI({self.i},{self.f})"


@dataclass(frozen=True)
class FloatFormat:
    """Binary floating point with ``e`` exponent bits and ``m`` fraction bits."""

    e: int
    m: int

    def __post_init__(self):
        if not isinstance(self.e, int) or isinstance(self.e, bool) or not 2 <= self.e <= 31:
            raise FormatError(f"exponent bits must be an integer in [2, 31], got {self.e!r}")
        if not isinstance(self.m, int) or isinstance(self.m, bool) or not 1 <= self.m <= 63:
            raise FormatError(f"mantissa bits must be an integer in [1, 63], got {self.m!r}")

    @property
    def width(self) -> int:
        return 1 + self.e + self.m

    @property
    def bias(self) -> int:
        return (1 << (self.e - 1)) - 1

    @property
    def emax(self) -> int:
        return self.bias

    @property
    def emin(self) -> int:
        return 1 - self.bias

    @property
    def exp_field_max(self) -> int:
        return (1 << self.e) - 1

    @property
    def max_finite(self) -> Fraction:
        return Fraction((1 << (self.m + 1)) - 1) * _pow2(self.emax - self.m)

    @property
    def min_normal(self) -> Fraction:
        return _pow2(self.emin)

    @property
    def min_subnormal(self) -> Fraction:
        return _pow2(self.emin - self.m)

    def __str__(self):
        return f"FL({self.e},{self.m})"


@dataclass(frozen=True)
class BinaryFormat:
    """One bit per value: bit 1 encodes +1, bit 0 encodes -1."""

    @property
    def width(self) -> int:
        return 1

    def __str__(self):
        return "BIN"


BINARY = BinaryFormat()

Format = Union[FixedFormat, FloatFormat, BinaryFormat]
Real = Union[int, float, Fraction, str]


def _pow2(k: int) -> Fraction:
    return Fraction(1 << k) if k >= 0 else Fraction(1, 1 << -k)


def _round_div(num: int, den: int, rm: RoundingMode) -> int:
    """Round ``num / den`` (both non-negative, ``den > 0``) to an integer."""
    q, r = divmod(num, den)
    if rm is NEAREST_EVEN:
        twice = r << 1
        if twice > den or (twice == den and q & 1):
            q += 1
    return q


def _floor_log2(num: int, den: int) -> int:
    """floor(log2(num/den)) for positive num, den."""
    e = num.bit_length() - den.bit_length()
    if e >= 0:
        if num < (den << e):
            e -= 1
    elif (num << -e) < den:
        e -= 1
    return e


# Exact decoded values are (sign, num, den) ratios; specials are the strings
# "nan" and "inf" with a sign.

def _ratio_of(x) -> tuple:
    """Exact (kind, sign, num, den) for a host number or literal."""
    if isinstance(x, QValue):
        return _decode(x)
    if isinstance(x, bool):
        x = int(x)
    if isinstance(x, int):
        return ("finite", 1 if x < 0 else 0, abs(x), 1)
    if isinstance(x, Fraction):
        return ("finite", 1 if x < 0 else 0, abs(x.numerator), x.denominator)
    x = float(x)
    if math.isnan(x):
        return ("nan", 0, 0, 1)
    sign = 1 if math.copysign(1.0, x) < 0 else 0
    if math.isinf(x):
        return ("inf", sign, 0, 1)
    num, den = abs(x).as_integer_ratio()
    return ("finite", sign, num, den)


def _decode(v: "QValue") -> tuple:
    fmt, raw = v.format, v.raw
    if isinstance(fmt, FixedFormat):
        mag_bits = fmt.i + fmt.f
        return ("finite", raw >> mag_bits, raw & ((1 << mag_bits) - 1), 1 << fmt.f)
    if isinstance(fmt, FloatFormat):
        m = fmt.m
        sign = raw >> (fmt.e + m)
        ef = (raw >> m) & fmt.exp_field_max
        frac = raw & ((1 << m) - 1)
        if ef == fmt.exp_field_max:
            return ("nan", 0, 0, 1) if frac else ("inf", sign, 0, 1)
        if ef == 0:
            sig, exp = frac, fmt.emin - m
        else:
            sig, exp = frac | (1 << m), ef - fmt.bias - m
        if exp >= 0:
            return ("finite", sign, sig << exp, 1)
        return ("finite", sign, sig, 1 << -exp)
    return ("finite", 0 if raw else 1, 1, 1)


# -- fixed point ------------------------------------------------------------

def _fixed_from_ratio(sign: int, num: int, den: int, fmt: FixedFormat, rm: RoundingMode) -> "QValue":
    mag = _round_div(num << fmt.f, den, rm)
    if mag > fmt.max_raw_magnitude:
        mag = fmt.max_raw_magnitude
    if mag == 0:
        sign = 0
    return QValue(fmt, (sign << (fmt.i + fmt.f)) | mag)


def fixed_quantize(x: Real, fmt: FixedFormat, rm: RoundingMode = NEAREST_EVEN) -> "QValue":
    """Nearest value of ``fmt`` to ``x`` under ``rm``, saturating out-of-range input."""
    if isinstance(x, str):
        return parse_literal(x, fmt, rm)
    kind, sign, num, den = _ratio_of(x)
    if kind != "finite":
        raise UnrepresentableInput(f"unrepresentable input {x!r} for {fmt}")
    return _fixed_from_ratio(sign, num, den, fmt, rm)


def fixed_to_real(v: "QValue") -> Fraction:
    if not isinstance(v.format, FixedFormat):
        raise FormatError(f"expected a fixed-point value, got {v.format}")
    _, sign, num, den = _decode(v)
    return Fraction(-num if sign else num, den)


def _fixed_parts(v: "QValue") -> tuple[int, int]:
    """Signed integer and fractional-bit count of a fixed-point value."""
    fmt = v.format
    if not isinstance(fmt, FixedFormat):
        raise FormatError(f"expected a fixed-point value, got {fmt}")
    mag_bits = fmt.i + fmt.f
    mag = v.raw & ((1 << mag_bits) - 1)
    return (-mag if v.raw >> mag_bits else mag), fmt.f


def _fixed_from_signed(n: int, frac_bits: int, fmt: FixedFormat, rm: RoundingMode) -> "QValue":
    return _fixed_from_ratio(1 if n < 0 else 0, abs(n), 1 << frac_bits, fmt, rm)


def fixed_add(a: "QValue", b: "QValue", out_fmt: FixedFormat,
              rm: RoundingMode = NEAREST_EVEN) -> "QValue":
    """Exact sum of two fixed-point values requantized into ``out_fmt``."""
    na, fa = _fixed_parts(a)
    nb, fb = _fixed_parts(b)
    fr = max(fa, fb)
    return _fixed_from_signed((na << (fr - fa)) + (nb << (fr - fb)), fr, out_fmt, rm)


def fixed_mul(a: "QValue", b: "QValue", out_fmt: FixedFormat,
              rm: RoundingMode = NEAREST_EVEN) -> "QValue":
    """Exact product of two fixed-point values requantized into ``out_fmt``."""
    na, fa = _fixed_parts(a)
    nb, fb = _fixed_parts(b)
    return _fixed_from_signed(na * nb, fa + fb, out_fmt, rm)


# -- floating point ---------------------------------------------------------

def _float_special(fmt: FloatFormat, kind: str, sign: int = 0) -> "QValue":
    m = fmt.m
    if kind == "nan":
        return QValue(fmt, (fmt.exp_field_max << m) | (1 << (m - 1)))
    return QValue(fmt, (sign << (fmt.e + m)) | (fmt.exp_field_max << m))


def _float_from_ratio(sign: int, num: int, den: int, fmt: FloatFormat,
                      rm: RoundingMode) -> "QValue":
    m, top = fmt.m, sign << (fmt.e + fmt.m)
    if num == 0:
        return QValue(fmt, top)
    e = _floor_log2(num, den)
    if e > fmt.emax:
        return _overflow(sign, fmt, rm)
    if e < fmt.emin - m - 1:
        return QValue(fmt, top)
    e = max(e, fmt.emin)
    shift = m - e
    if shift >= 0:
        sig = _round_div(num << shift, den, rm)
    else:
        sig = _round_div(num, den << -shift, rm)
    if sig >> (m + 1):
        sig >>= 1
        e += 1
        if e > fmt.emax:
            return _overflow(sign, fmt, rm)
    if sig >> m == 0:
        # subnormal or zero; e == emin here
        return QValue(fmt, top | sig)
    return QValue(fmt, top | ((e + fmt.bias) << m) | (sig - (1 << m)))


def _overflow(sign: int, fmt: FloatFormat, rm: RoundingMode) -> "QValue":
    if rm is TOWARD_ZERO:
        m = fmt.m
        return QValue(fmt, (sign << (fmt.e + m)) | ((fmt.exp_field_max - 1) << m) | ((1 << m) - 1))
    return _float_special(fmt, "inf", sign)


def float_quantize(x: Real, fmt: FloatFormat, rm: RoundingMode = NEAREST_EVEN) -> "QValue":
    """Correctly rounded encoding of ``x`` in ``fmt`` (overflow goes to infinity)."""
    if isinstance(x, str):
        return parse_literal(x, fmt, rm)
    kind, sign, num, den = _ratio_of(x)
    if kind != "finite":
        return _float_special(fmt, kind, sign)
    return _float_from_ratio(sign, num, den, fmt, rm)


def float_to_real(v: "QValue") -> Union[Fraction, float]:
    """Exact value as a Fraction; infinities and NaN come back as host floats."""
    if not isinstance(v.format, FloatFormat):
        raise FormatError(f"expected a floating-point value, got {v.format}")
    return to_real(v)


def _float_operands(a: "QValue", b: "QValue", fmt: FloatFormat):
    for v in (a, b):
        if not isinstance(v.format, FloatFormat):
            raise FormatError(f"expected a floating-point value, got {v.format}")
    return _decode(a), _decode(b)


def float_add(a: "QValue", b: "QValue", fmt: FloatFormat,
              rm: RoundingMode = NEAREST_EVEN) -> "QValue":
    (ka, sa, na, da), (kb, sb, nb, db) = _float_operands(a, b, fmt)
    if ka == "nan" or kb == "nan":
        return _float_special(fmt, "nan")
    if ka == "inf" or kb == "inf":
        if ka == kb and sa != sb:
            return _float_special(fmt, "nan")
        return _float_special(fmt, "inf", sa if ka == "inf" else sb)
    # denominators are powers of two
    d = max(da, db)
    n = (-na if sa else na) * (d // da) + (-nb if sb else nb) * (d // db)
    if n == 0:
        sign = sa & sb if na == 0 and nb == 0 else 0
        return QValue(fmt, sign << (fmt.e + fmt.m))
    return _float_from_ratio(1 if n < 0 else 0, abs(n), d, fmt, rm)


def float_mul(a: "QValue", b: "QValue", fmt: FloatFormat,
              rm: RoundingMode = NEAREST_EVEN) -> "QValue":
    (ka, sa, na, da), (kb, sb, nb, db) = _float_operands(a, b, fmt)
    sign = sa ^ sb
    if ka == "nan" or kb == "nan":
        return _float_special(fmt, "nan")
    if ka == "inf" or kb == "inf":
        if (ka == "finite" and na == 0) or (kb == "finite" and nb == 0):
            return _float_special(fmt, "nan")
        return _float_special(fmt, "inf", sign)
    return _float_from_ratio(sign, na * nb, da * db, fmt, rm)


# -- binary -----------------------------------------------------------------

def binary_encode(x: Real) -> "QValue":
    """Sign binarization: non-negative values (and NaN) map to +1, negatives to -1."""
    if isinstance(x, str):
        return parse_literal(x, BINARY)
    kind, sign, num, _ = _ratio_of(x)
    if kind == "nan":
        return QValue(BINARY, 1)
    return QValue(BINARY, 0 if sign and (num or kind == "inf") else 1)


# -- generic ----------------------------------------------------------------

def quantize(x: Real, fmt: Format, rm: RoundingMode = NEAREST_EVEN) -> "QValue":
    if isinstance(fmt, FixedFormat):
        return fixed_quantize(x, fmt, rm)
    if isinstance(fmt, FloatFormat):
        return float_quantize(x, fmt, rm)
    if isinstance(fmt, BinaryFormat):
        return binary_encode(x)
    raise FormatError(f"not a numeric format: {fmt!r}")


def to_real(v: "QValue") -> Union[Fraction, float]:
    kind, sign, num, den = _decode(v)
    if kind == "nan":
        return math.nan
    if kind == "inf":
        return -math.inf if sign else math.inf
    return Fraction(-num if sign else num, den)


def convert(v: "QValue", to: Format, rm: RoundingMode = NEAREST_EVEN) -> "QValue":
    """Re-encode ``v`` in ``to`` through an exact intermediate value.

    Non-finite values entering a fixed-point format saturate: NaN to the
    positive extreme, infinities to the extreme of matching sign.
    """
    if v.format == to:
        return v
    kind, sign, num, den = _decode(v)
    if isinstance(to, FixedFormat):
        if kind == "nan":
            return QValue(to, to.max_raw_magnitude)
        if kind == "inf":
            return QValue(to, (sign << (to.i + to.f)) | to.max_raw_magnitude)
        return _fixed_from_ratio(sign, num, den, to, rm)
    if isinstance(to, FloatFormat):
        if kind != "finite":
            return _float_special(to, kind, sign)
        return _float_from_ratio(sign, num, den, to, rm)
    if isinstance(to, BinaryFormat):
        if kind == "nan":
            return QValue(BINARY, 1)
        return QValue(BINARY, 0 if sign and (num or kind == "inf") else 1)
    raise FormatError(f"not a numeric format: {to!r}")


def add(a: "QValue", b: "QValue", out_fmt: Format | None = None,
        rm: RoundingMode = NEAREST_EVEN) -> "QValue":
    """Exact-then-round addition dispatched on the output format.

    Operands must belong to the same family as ``out_fmt``; :func:`convert`
    them first otherwise.
    """
    out_fmt = out_fmt or a.format
    if isinstance(out_fmt, FixedFormat):
        return fixed_add(a, b, out_fmt, rm)
    if isinstance(out_fmt, FloatFormat):
        return float_add(a, b, out_fmt, rm)
    raise FormatError(f"addition is not defined in {out_fmt}")


def mul(a: "QValue", b: "QValue", out_fmt: Format | None = None,
        rm: RoundingMode = NEAREST_EVEN) -> "QValue":
    out_fmt = out_fmt or a.format
    if isinstance(out_fmt, FixedFormat):
        return fixed_mul(a, b, out_fmt, rm)
    if isinstance(out_fmt, FloatFormat):
        return float_mul(a, b, out_fmt, rm)
    if isinstance(out_fmt, BinaryFormat):
        for v in (a, b):
            if not isinstance(v.format, BinaryFormat):
                raise FormatError(f"expected a binary value, got {v.format}")
        return QValue(BINARY, 1 ^ (a.raw ^ b.raw))
    raise FormatError(f"multiplication is not defined in {out_fmt}")


# -- literals ---------------------------------------------------------------

_DECIMAL = re.compile(
    r"\s*([+-]?)(?:(\d+)(?:\.(\d*))?|\.(\d+))(?:[eE]([+-]?\d+))?\s*\Z")
_SPECIAL = re.compile(r"\s*([+-]?)(inf|infinity|nan)\s*\Z", re.IGNORECASE)

# Decimal exponents beyond this are resolved without building huge integers.
_EXP10_LIMIT = 4000


def _parse_decimal(s: str) -> tuple:
    if not isinstance(s, str):
        raise ParseError(f"expected text, got {type(s).__name__}")
    mo = _DECIMAL.match(s)
    if mo is None:
        sp = _SPECIAL.match(s)
        if sp is None:
            raise ParseError(f"malformed numeric literal {s!r}")
        sign = 1 if sp.group(1) == "-" else 0
        return ("nan", 0, 0, 1) if sp.group(2).lower() == "nan" else ("inf", sign, 0, 1)
    sign_s, int_part, frac_a, frac_b, exp_s = mo.groups()
    sign = 1 if sign_s == "-" else 0
    if int_part is None:
        int_part, frac = "0", frac_b
    else:
        frac = frac_a or ""
    digits = int(int_part + frac)
    exp10 = (int(exp_s) if exp_s else 0) - len(frac)
    if digits == 0:
        return ("finite", sign, 0, 1)
    if abs(exp10) > _EXP10_LIMIT:
        magnitude = len(str(digits)) + exp10
        if magnitude > _EXP10_LIMIT:
            return ("huge", sign, 0, 1)
        if magnitude < -_EXP10_LIMIT:
            return ("tiny", sign, 0, 1)
    if exp10 >= 0:
        return ("finite", sign, digits * 10 ** exp10, 1)
    return ("finite", sign, digits, 10 ** -exp10)


def parse_literal(s: str, fmt: Format, rm: RoundingMode = NEAREST_EVEN) -> "QValue":
    """Parse a decimal literal exactly, then round it into ``fmt``.

    ``"-0"`` yields positive zero in fixed point and negative zero in floating
    point.
    """
    kind, sign, num, den = _parse_decimal(s)
    if kind == "huge":
        if isinstance(fmt, FixedFormat):
            return QValue(fmt, (sign << (fmt.i + fmt.f)) | fmt.max_raw_magnitude)
        if isinstance(fmt, FloatFormat):
            return _overflow(sign, fmt, rm)
        return QValue(BINARY, 0 if sign else 1)
    if kind == "tiny":
        kind, num = "finite", 0
    if isinstance(fmt, FixedFormat):
        if kind != "finite":
            raise UnrepresentableInput(f"unrepresentable input {s!r} for {fmt}")
        return _fixed_from_ratio(sign, num, den, fmt, rm)
    if isinstance(fmt, FloatFormat):
        if kind != "finite":
            return _float_special(fmt, kind, sign)
        return _float_from_ratio(sign, num, den, fmt, rm)
    if isinstance(fmt, BinaryFormat):
        return QValue(BINARY, 0 if sign and (num or kind == "inf") else 1)
    raise FormatError(f"not a numeric format: {fmt!r}")


@dataclass(frozen=True)
class QValue:
    """A raw bit pattern interpreted under ``format``.

    Accepts strings, host floats, ints and Fractions through :meth:`of`.
    Equality is bitwise; ordering compares the encoded numbers.
    """

    format: Format
    raw: int

    def __post_init__(self):
        width = self.format.width
        if not isinstance(self.raw, int) or not 0 <= self.raw < (1 << width):
            raise FormatError(f"raw pattern {self.raw!r} does not fit {width} bits of {self.format}")
        if isinstance(self.format, FixedFormat) and self.raw == 1 << (width - 1):
            object.__setattr__(self, "raw", 0)

    @classmethod
    def of(cls, x: Real, fmt: Format, rm: RoundingMode = NEAREST_EVEN) -> "QValue":
        if isinstance(x, str):
            return parse_literal(x, fmt, rm)
        if isinstance(x, QValue):
            return convert(x, fmt, rm)
        return quantize(x, fmt, rm)

    @property
    def sign(self) -> int:
        return self.raw >> (self.format.width - 1) if not isinstance(self.format, BinaryFormat) else 1 - self.raw

    @property
    def is_nan(self) -> bool:
        return _decode(self)[0] == "nan"

    @property
    def is_inf(self) -> bool:
        return _decode(self)[0] == "inf"

    @property
    def is_finite(self) -> bool:
        return _decode(self)[0] == "finite"

    def to_real(self):
        return to_real(self)

    def __float__(self):
        return float(to_real(self))

    def __neg__(self):
        if isinstance(self.format, BinaryFormat):
            return QValue(BINARY, 1 - self.raw)
        if isinstance(self.format, FloatFormat) and self.is_nan:
            return self
        if isinstance(self.format, FixedFormat) and self.raw == 0:
            return self
        return QValue(self.format, self.raw ^ (1 << (self.format.width - 1)))

    def __add__(self, other):
        return add(self, _coerce(other, self.format))

    def __sub__(self, other):
        return add(self, -_coerce(other, self.format))

    def __mul__(self, other):
        return mul(self, _coerce(other, self.format))

    def _cmp_key(self):
        r = to_real(self)
        if isinstance(r, float) and math.isnan(r):
            return None
        return r

    def __lt__(self, other):
        a, b = self._cmp_key(), _coerce(other, self.format)._cmp_key()
        return a is not None and b is not None and a < b

    def __le__(self, other):
        a, b = self._cmp_key(), _coerce(other, self.format)._cmp_key()
        return a is not None and b is not None and a <= b

    def __gt__(self, other):
        return _coerce(other, self.format) < self

    def __ge__(self, other):
        return _coerce(other, self.format) <= self

    def __repr__(self):
        digits = (self.format.width + 3) // 4
        try:
            shown = repr(float(self))
        except OverflowError:
            shown = str(to_real(self))
        return f"QValue({self.format}, 0x{self.raw:0{digits}x} = {shown})"


def _coerce(x, fmt: Format) -> QValue:
    return x if isinstance(x, QValue) else QValue.of(x, fmt)
