"""Independent reference models used as test oracles.

These are deliberately naive (brute-force search, Fraction arithmetic,
string manipulation, the host's IEEE binary32 unit) and share no code with
the library.
"""

import ctypes
import ctypes.util
import struct
from fractions import Fraction

import numpy as np


# -- fixed point ----------------------------------------------------------------

def fixed_values(i, f):
    """(raw, value) for every encoding of sign-magnitude FI(i, f)."""
    n = i + f
    out = []
    for raw in range(1 << (n + 1)):
        mag = raw & ((1 << n) - 1)
        sign = raw >> n
        out.append((raw, Fraction(-mag if sign else mag, 1 << f)))
    return out


def fixed_nearest(x, i, f):
    """Nearest FI(i, f) value to ``x`` by exhaustive search; ties go to the even magnitude."""
    x = Fraction(x)
    best = None
    for raw, v in fixed_values(i, f):
        mag = raw & ((1 << (i + f)) - 1)
        key = (abs(x - v), mag & 1)
        if best is None or key < best[0]:
            best = (key, v)
    return best[1]


def fixed_round(x, i, f):
    """Round a Fraction onto the FI(i, f) grid (ties to even), then saturate."""
    x = Fraction(x)
    scaled = abs(x) * (1 << f)
    q = scaled.numerator // scaled.denominator
    rem = scaled - q
    if rem > Fraction(1, 2) or (rem == Fraction(1, 2) and q % 2 == 1):
        q += 1
    q = min(q, (1 << (i + f)) - 1)
    v = Fraction(q, 1 << f)
    return -v if x < 0 else v


# -- floating point -------------------------------------------------------------

def float_values(e, m):
    """(raw, value) for every finite encoding of FL(e, m)."""
    bias = (1 << (e - 1)) - 1
    out = []
    for sign in (0, 1):
        for ef in range((1 << e) - 1):
            for frac in range(1 << m):
                if ef == 0:
                    v = Fraction(frac, 1 << m) * Fraction(2) ** (1 - bias)
                else:
                    v = (1 + Fraction(frac, 1 << m)) * Fraction(2) ** (ef - bias)
                raw = (sign << (e + m)) | (ef << m) | frac
                out.append((raw, -v if sign else v))
    return out


def float_nearest(x, e, m):
    """Round-to-nearest-even into FL(e, m) by exhaustive search.

    Returns a Fraction, or +-inf (as float) on overflow.
    """
    x = Fraction(x)
    bias = (1 << (e - 1)) - 1
    emax = bias
    top = (2 - Fraction(1, 1 << m)) * Fraction(2) ** emax
    if abs(x) >= top + Fraction(2) ** (emax - m - 1):
        return float("inf") if x > 0 else float("-inf")
    best = None
    for raw, v in float_values(e, m):
        if (v < 0) != (x < 0) and v != 0:
            continue
        key = (abs(x - v), raw & 1)
        if best is None or key < best[0]:
            best = (key, v)
    return best[1]


def f32_bits(values):
    return np.asarray(values, dtype=np.float32).view(np.uint32).astype(np.uint64)


def f32_from_bits(bits):
    return np.asarray(bits, dtype=np.uint32).view(np.float32)


def py_f32_bits(x: float) -> int:
    return struct.unpack("<I", struct.pack("<f", x))[0]


_libc = ctypes.CDLL(ctypes.util.find_library("c"))
_libc.strtof.restype = ctypes.c_float
_libc.strtof.argtypes = [ctypes.c_char_p, ctypes.POINTER(ctypes.c_char_p)]


def strtof(s: str) -> float:
    """Host C library decimal-to-binary32 conversion."""
    return _libc.strtof(s.encode(), None)


# -- approximate multipliers ----------------------------------------------------

def drum_reference(a: int, b: int, t: int) -> int:
    """Truncate each magnitude to its top t bits with the last kept bit set, then multiply."""
    def trunc(x):
        s = bin(x)[2:]
        if len(s) <= t:
            return x
        return int(s[:t - 1] + "1", 2) << (len(s) - t)
    if a == 0 or b == 0:
        return 0
    return trunc(a) * trunc(b)


def cfpu_reference(a: Fraction, b: Fraction, m: int) -> Fraction:
    """Fraction-sum product of two normal values with an m-bit fraction field.

    On a carry the sum is halved and the dropped bit rounds upward.
    """
    def split(x):
        x = abs(x)
        ex = 0
        while x >= 2:
            x /= 2
            ex += 1
        while x < 1:
            x *= 2
            ex -= 1
        return ex, x - 1
    ea, fa = split(a)
    eb, fb = split(b)
    s = fa + fb
    ex = ea + eb
    if s >= 1:
        ex += 1
        half = (s - 1) / 2 * (1 << m)
        s = Fraction(-((-half.numerator) // half.denominator), 1 << m)
    v = (1 + s) * Fraction(2) ** ex
    return -v if (a < 0) != (b < 0) else v


def pm1_dot(a, b) -> int:
    """Dot product of bit vectors read as +1 (bit 1) and -1 (bit 0)."""
    return sum((2 * x - 1) * (2 * y - 1) for x, y in zip(a, b))
