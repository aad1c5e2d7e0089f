"""Representation notation and the operator registry.

Notation strings follow the table syntax used throughout the project:
``FI(i,f)``, ``FL(e,m)``, ``H(i,f,t)``, ``I(e,m)`` and ``BIN``.  A notation
names a storage format plus the multiplier used with it; the inference
engine looks up vectorized multiply/add kernels here by operator id.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Optional

from . import approx, arrays
from .errors import FormatError, NotationError, OperatorError
from .numerics import BINARY, BinaryFormat, FixedFormat, FloatFormat

FAMILIES = ("FI", "FL", "H", "I", "BIN")

_ARITY = {"FI": 2, "FL": 2, "H": 3, "I": 2, "BIN": 0}
_NOTATION = re.compile(r"\s*(FI|FL|H|I|BIN)\s*(?:\(([^()]*)\))?\s*\Z")


@dataclass(frozen=True)
class Representation:
    """A storage format together with the multiplier that operates on it."""

    family: str
    format: object
    t: Optional[int] = None

    @property
    def multiply(self) -> str:
        if self.family == "H":
            return f"drum:{self.t}"
        if self.family == "I":
            return "cfpu"
        if self.family == "BIN":
            return "xnor"
        return "exact"

    @property
    def add(self) -> str:
        return "popcount" if self.family == "BIN" else "exact"

    @property
    def fields(self) -> tuple:
        """Bit counts of the tunable fields, range field first."""
        fmt = self.format
        if self.family in ("FI", "H"):
            return (fmt.i, fmt.f) + ((self.t,) if self.family == "H" else ())
        if self.family in ("FL", "I"):
            return (fmt.e, fmt.m)
        return ()

    @property
    def total_bits(self) -> int:
        return self.format.width

    def __str__(self):
        if self.family == "BIN":
            return "BIN"
        return f"{self.family}({','.join(str(v) for v in self.fields)})"


def parse_notation(text: str) -> Representation:
    """Parse ``FI(6,8)``-style text; raises :class:`NotationError` naming the bad token."""
    if not isinstance(text, str):
        raise NotationError(repr(text), "expected a string")
    mo = _NOTATION.match(text)
    if mo is None:
        raise NotationError(text.strip())
    family, args = mo.group(1), mo.group(2)
    if family == "BIN":
        if args is not None and args.strip():
            raise NotationError(text.strip(), "BIN takes no parameters")
        return Representation("BIN", BINARY)
    if args is None:
        raise NotationError(text.strip(), f"{family} needs {_ARITY[family]} parameters")
    parts = [p.strip() for p in args.split(",")]
    if len(parts) != _ARITY[family] or not all(p.isdigit() for p in parts):
        raise NotationError(text.strip(), f"{family} needs {_ARITY[family]} integer parameters")
    vals = [int(p) for p in parts]
    try:
        return make_representation(family, *vals)
    except FormatError as exc:
        raise NotationError(text.strip(), str(exc)) from None


def make_representation(family: str, *fields: int) -> Representation:
    if family in ("FI", "H"):
        fmt = FixedFormat(fields[0], fields[1])
        if family == "H":
            approx.ApproxFixedMulConfig(fmt, fields[2])
            return Representation("H", fmt, fields[2])
        return Representation("FI", fmt)
    if family in ("FL", "I"):
        return Representation(family, FloatFormat(fields[0], fields[1]))
    if family == "BIN":
        return Representation("BIN", BINARY)
    raise NotationError(family)


def format_notation(fmt) -> str:
    """Notation of a bare format (exact operators)."""
    return str(fmt)


def family_of_format(fmt) -> str:
    if isinstance(fmt, FixedFormat):
        return "FI"
    if isinstance(fmt, FloatFormat):
        return "FL"
    if isinstance(fmt, BinaryFormat):
        return "BIN"
    raise FormatError(f"not a numeric format: {fmt!r}")


# -- kernels ------------------------------------------------------------------

# A multiply kernel maps (x, w) value arrays to products held in the
# activation format; an add kernel maps (acc, p) to the rounded sum.
MulKernel = Callable
AddKernel = Callable

_MULTIPLY_FACTORIES: dict[str, Callable] = {}
_ADD_FACTORIES: dict[str, Callable] = {}


def register_multiply(name: str, factory: Callable) -> None:
    """Register ``factory(param, weight_fmt, act_fmt) -> kernel`` under ``name``.

    Operator ids take the form ``name`` or ``name:param``.
    """
    _MULTIPLY_FACTORIES[name] = factory


def register_add(name: str, factory: Callable) -> None:
    _ADD_FACTORIES[name] = factory


def _split(op_id: str):
    name, _, param = op_id.partition(":")
    return name, (param or None)


def resolve_multiply(op_id: str, weight_fmt, act_fmt) -> MulKernel:
    name, param = _split(op_id)
    try:
        factory = _MULTIPLY_FACTORIES[name]
    except KeyError:
        raise OperatorError(f"unknown multiply operator {op_id!r}") from None
    arrays.check_vector_format(weight_fmt)
    arrays.check_vector_format(act_fmt)
    return factory(param, weight_fmt, act_fmt)


def resolve_add(op_id: str, act_fmt) -> AddKernel:
    name, param = _split(op_id)
    try:
        factory = _ADD_FACTORIES[name]
    except KeyError:
        raise OperatorError(f"unknown add operator {op_id!r}") from None
    arrays.check_vector_format(act_fmt)
    return factory(param, act_fmt)


def _exact_mul(param, wfmt, afmt):
    if isinstance(afmt, BinaryFormat) or isinstance(wfmt, BinaryFormat):
        raise OperatorError("exact multiply needs numeric formats; use xnor with BIN")
    return lambda x, w: arrays.mul(x, w, afmt)


def _drum_mul(param, wfmt, afmt):
    if not (isinstance(wfmt, FixedFormat) and isinstance(afmt, FixedFormat)):
        raise OperatorError(f"drum multiply needs fixed-point formats, got {wfmt} and {afmt}")
    try:
        t = int(param)
    except (TypeError, ValueError):
        raise OperatorError(f"drum multiply needs a width, e.g. 'drum:8', got {param!r}") from None
    if t < 2:
        raise OperatorError(f"drum width must be at least 2, got {t}")
    return lambda x, w: approx.drum_mul_array(x, w, afmt.f, wfmt.f, t, afmt)


def _cfpu_mul(param, wfmt, afmt):
    if not (isinstance(wfmt, FloatFormat) and isinstance(afmt, FloatFormat)):
        raise OperatorError(f"cfpu multiply needs floating-point formats, got {wfmt} and {afmt}")
    return lambda x, w: approx.cfpu_mul_array(x, w, afmt, wfmt, afmt)


def _xnor_mul(param, wfmt, afmt):
    if not (isinstance(wfmt, BinaryFormat) and isinstance(afmt, BinaryFormat)):
        raise OperatorError(f"xnor multiply needs BIN formats, got {wfmt} and {afmt}")
    return approx.xnor_mul_array


def _exact_add(param, afmt):
    if isinstance(afmt, BinaryFormat):
        raise OperatorError("BIN parts accumulate with the 'popcount' adder")
    return lambda acc, p: arrays.add(acc, p, afmt)


def _popcount_add(param, afmt):
    # +-1 products summed as exact integers
    return lambda acc, p: acc + p


register_multiply("exact", _exact_mul)
register_multiply("drum", _drum_mul)
register_multiply("cfpu", _cfpu_mul)
register_multiply("xnor", _xnor_mul)
register_add("exact", _exact_add)
register_add("popcount", _popcount_add)
