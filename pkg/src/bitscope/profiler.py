"""Per-part value ranges of weights, biases and activations.

Activation ranges cover every value a part sees in a float32 forward pass:
its input and the output of each of its layers (pre- and post-ReLU alike).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError
from .nn.engine import PartitionPlan
from .nn.model import Model, forward_float32
from .numerics import FloatFormat

CATEGORIES = ("w", "b", "a")
_EMPTY = (math.inf, -math.inf)


def _fold(r, values) -> tuple:
    v = np.asarray(values)
    if v.size == 0:
        return r
    return (min(r[0], float(v.min())), max(r[1], float(v.max())))


def _union(r, s) -> tuple:
    return (min(r[0], s[0]), max(r[1], s[1]))


@dataclass
class PartRange:
    name: str
    w: tuple = _EMPTY
    b: tuple = _EMPTY
    a: tuple = _EMPTY

    @property
    def range(self) -> tuple:
        lo, hi = _EMPTY
        for r in (self.w, self.b, self.a):
            lo, hi = min(lo, r[0]), max(hi, r[1])
        return (lo, hi)

    @property
    def maxabs(self) -> float:
        lo, hi = self.range
        return max(abs(lo), abs(hi)) if lo <= hi else 0.0


@dataclass
class RangeProfile:
    """Ranges keyed by part id; ``samples`` counts the calibration images."""

    parts: list
    samples: int = 0

    def merge(self, other: "RangeProfile") -> "RangeProfile":
        if [p.name for p in self.parts] != [p.name for p in other.parts]:
            raise DataError("cannot merge profiles of different partitions")
        merged = [PartRange(p.name, _union(p.w, q.w), _union(p.b, q.b), _union(p.a, q.a))
                  for p, q in zip(self.parts, other.parts)]
        return RangeProfile(merged, self.samples + other.samples)

    def range(self, part: int) -> tuple:
        return self.parts[part].range

    def to_dict(self) -> dict:
        out = {}
        for pid, p in enumerate(self.parts):
            lo, hi = p.range
            entry = {"name": p.name, "min": lo, "max": hi, "samples": self.samples}
            for cat in CATEGORIES:
                r = getattr(p, cat)
                if r[0] <= r[1]:
                    entry[cat] = {"min": r[0], "max": r[1]}
            out[str(pid)] = entry
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RangeProfile":
        try:
            keys = sorted(d, key=int)
            if [int(k) for k in keys] != list(range(len(keys))) or not keys:
                raise ValueError("part ids must be 0..P-1")
            parts, samples = [], 0
            for k in keys:
                e = d[k]
                cats = {}
                for cat in CATEGORIES:
                    if cat in e:
                        lo, hi = float(e[cat]["min"]), float(e[cat]["max"])
                        if not lo <= hi:
                            raise ValueError(f"part {k} {cat} range has min > max")
                        cats[cat] = (lo, hi)
                if not cats:
                    lo, hi = float(e["min"]), float(e["max"])
                    if not lo <= hi:
                        raise ValueError(f"part {k} has min > max")
                    cats["a"] = (lo, hi)
                parts.append(PartRange(str(e.get("name", f"P{k}")), **cats))
                samples = int(e.get("samples", 0))
            return cls(parts, samples)
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise DataError(f"malformed profile: {exc}") from None


def static_profile(model: Model, plan: PartitionPlan) -> RangeProfile:
    """Weight and bias ranges only (independent of any input)."""
    plan.check(model)
    parts = [PartRange(name) for name in plan.names]
    for li in model.weighted_layers():
        p = parts[plan.assignment[li]]
        p.w = _fold(p.w, model.weights[li])
        p.b = _fold(p.b, model.biases[li])
    return RangeProfile(parts, 0)


def profile(model: Model, plan: PartitionPlan, images, chunk: int = 500) -> RangeProfile:
    """Fold min/max over float32 forward passes of ``images``."""
    images = np.asarray(images, dtype=np.float32)
    if len(images) == 0:
        raise DataError("calibration set is empty")
    prof = static_profile(model, plan)
    starts = {group[0] for group in plan.parts}
    for s in range(0, len(images), chunk):
        x = images[s:s + chunk].reshape((-1,) + model.input_shape)
        first = prof.parts[0]
        first.a = _fold(first.a, x)

        def hook(li, out):
            p = prof.parts[plan.assignment[li]]
            p.a = _fold(p.a, out)
            # the value crossing into the next part is also that part's input
            if li + 1 in starts:
                q = prof.parts[plan.assignment[li + 1]]
                q.a = _fold(q.a, out)

        forward_float32(model, x, hook)
    prof.samples = len(images)
    return prof


def required_integral_bits(lo: float, hi: Optional[float] = None) -> int:
    """Smallest ``i >= 0`` with ``2**i > max(|lo|, |hi|)``; the sign bit is separate."""
    maxabs = _maxabs(lo, hi)
    if maxabs == 0:
        return 0
    _, ex = math.frexp(maxabs)
    return max(ex, 0)


def required_exponent_bits(lo: float, hi: Optional[float] = None) -> int:
    """Smallest ``e >= 2`` whose largest binade ``[2**emax, 2**(emax+1))`` reaches ``maxabs``."""
    maxabs = _maxabs(lo, hi)
    if maxabs == 0:
        return 2
    _, ex = math.frexp(maxabs)
    top = ex - 1
    e = 2
    while FloatFormat(e, 1).emax < top:
        e += 1
    return e


def _maxabs(lo, hi) -> float:
    if hi is None:
        lo, hi = lo
    lo, hi = float(lo), float(hi)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise DataError("range must be finite")
    return max(abs(lo), abs(hi))
