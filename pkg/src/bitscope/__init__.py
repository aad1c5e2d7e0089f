"""Emulated low-precision number formats, approximate multipliers and
bit-width exploration for small convolutional networks."""

from .numerics import (BINARY, NEAREST_EVEN, TOWARD_ZERO, BinaryFormat, FixedFormat,
                       FloatFormat, QValue, RoundingMode, convert, parse_literal, quantize,
                       to_real)
from .registry import Representation, parse_notation

__all__ = ["BINARY", "NEAREST_EVEN", "TOWARD_ZERO", "BinaryFormat", "FixedFormat", "FloatFormat",
           "QValue", "RoundingMode", "convert", "parse_literal", "quantize", "to_real",
           "Representation", "parse_notation"]

__version__ = "0.1.0"
