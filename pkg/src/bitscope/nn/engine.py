"""Inference over per-part numeric formats and operator implementations.

A :class:`PartitionPlan` groups contiguous layers into parts; each part gets
a :class:`PartConfig` naming the weight format, the activation (and
accumulator) format and the multiply/add operators.  Inside a part every
product and every partial sum is rounded into the activation format, one
term at a time, in a fixed order; values are converted only when they cross
into a new part.
"""

from __future__ import annotations

import dataclasses
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .. import arrays
from ..errors import BitscopeError, NotationError, ShapeError
from ..numerics import BinaryFormat, FixedFormat, FloatFormat
from ..registry import Representation, parse_notation, resolve_add, resolve_multiply
from .model import Model, im2col, maxpool

FULL_PRECISION = FloatFormat(8, 23)
DEFAULT_CHUNK = 256


@dataclass(frozen=True)
class PartitionPlan:
    """Part id of every layer; ids are 0..P-1 and contiguous in layer order."""

    assignment: tuple
    names: tuple

    def __post_init__(self):
        a = tuple(int(p) for p in self.assignment)
        object.__setattr__(self, "assignment", a)
        object.__setattr__(self, "names", tuple(str(n) for n in self.names))
        if not a:
            raise ShapeError("partition plan is empty")
        if a[0] != 0 or any(b - c not in (0, 1) for c, b in zip(a, a[1:])):
            raise ShapeError(f"parts must be contiguous and numbered in order, got {list(a)}")
        if len(self.names) != a[-1] + 1:
            raise ShapeError(f"plan has {a[-1] + 1} parts but {len(self.names)} names")
        if len(set(self.names)) != len(self.names):
            raise ShapeError("part names must be unique")

    @property
    def num_parts(self) -> int:
        return self.assignment[-1] + 1

    @property
    def parts(self) -> list:
        groups = [[] for _ in range(self.num_parts)]
        for li, p in enumerate(self.assignment):
            groups[p].append(li)
        return groups

    def part_index(self, key) -> int:
        if isinstance(key, int):
            if 0 <= key < self.num_parts:
                return key
        elif key in self.names:
            return self.names.index(key)
        elif isinstance(key, str) and key.isdigit() and int(key) < self.num_parts:
            return int(key)
        raise ShapeError(f"no part named {key!r} (parts: {', '.join(self.names)})")

    def check(self, model: Model) -> "PartitionPlan":
        if len(self.assignment) != len(model.layers):
            raise ShapeError(f"plan covers {len(self.assignment)} layers, model has {len(model.layers)}")
        return self

    @classmethod
    def layerwise(cls, model: Model) -> "PartitionPlan":
        """One part per weighted layer; relu/pool/flatten layers join the part before them.

        Layers ahead of the first weighted layer belong to the first part.
        """
        assignment, names, part = [], [], 0
        for layer in model.layers:
            if layer.weighted:
                if names:
                    part += 1
                names.append(layer.name or f"P{part}")
            assignment.append(part)
        return cls(tuple(assignment), tuple(names or ["P0"]))

    @classmethod
    def single(cls, model: Model, name: str = "ALL") -> "PartitionPlan":
        return cls((0,) * len(model.layers), (name,))

    def to_dict(self) -> dict:
        return {"assignment": list(self.assignment), "names": list(self.names)}

    @classmethod
    def from_dict(cls, d: dict) -> "PartitionPlan":
        try:
            return cls(tuple(d["assignment"]), tuple(d["names"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ShapeError(f"malformed partition plan: {exc}") from None


@dataclass(frozen=True)
class PartConfig:
    part: int
    weight_format: object
    act_format: object
    multiply: str = "exact"
    add: str = "exact"

    @classmethod
    def from_notation(cls, part: int, rep) -> "PartConfig":
        if isinstance(rep, str):
            rep = parse_notation(rep)
        return cls(part, rep.format, rep.format, rep.multiply, rep.add)

    @classmethod
    def full_precision(cls, part: int) -> "PartConfig":
        return cls(part, FULL_PRECISION, FULL_PRECISION)

    def representation(self) -> Optional[Representation]:
        """The single notation describing this config, if weights and activations agree."""
        if self.weight_format != self.act_format:
            return None
        fmt = self.act_format
        if isinstance(fmt, FixedFormat):
            if self.multiply == "exact":
                return Representation("FI", fmt)
            if self.multiply.startswith("drum:"):
                return Representation("H", fmt, int(self.multiply[5:]))
        if isinstance(fmt, FloatFormat):
            if self.multiply == "exact":
                return Representation("FL", fmt)
            if self.multiply == "cfpu":
                return Representation("I", fmt)
        if isinstance(fmt, BinaryFormat) and self.multiply == "xnor":
            return Representation("BIN", fmt)
        return None

    @property
    def notation(self) -> str:
        rep = self.representation()
        if rep is not None:
            return str(rep)
        return f"W={self.weight_format};A={self.act_format};mul={self.multiply};add={self.add}"

    def is_full_precision(self) -> bool:
        return (self.weight_format == FULL_PRECISION and self.act_format == FULL_PRECISION
                and self.multiply == "exact" and self.add == "exact")

    def with_part(self, part: int) -> "PartConfig":
        return dataclasses.replace(self, part=part)


def full_precision_configs(plan: PartitionPlan) -> list:
    return [PartConfig.full_precision(p) for p in range(plan.num_parts)]


_TOP_COMMA = re.compile(r",(?![^()]*\))")


def parse_configs(text: str, plan: PartitionPlan) -> list:
    """Parse ``CONV1=FI(6,8),FC1=H(8,8,14),...`` or a single notation for every part.

    Parts not mentioned stay at full precision.
    """
    text = text.strip()
    if "=" not in text:
        rep = parse_notation(text)
        return [PartConfig.from_notation(p, rep) for p in range(plan.num_parts)]
    configs = full_precision_configs(plan)
    for token in _TOP_COMMA.split(text):
        token = token.strip()
        if not token:
            continue
        key, sep, notation = token.partition("=")
        if not sep:
            raise NotationError(token, "expected PART=NOTATION")
        try:
            p = plan.part_index(key.strip())
        except ShapeError:
            raise NotationError(key.strip(), f"no such part; parts are {', '.join(plan.names)}") from None
        configs[p] = PartConfig.from_notation(p, notation)
    return configs


def configs_notation(configs: Sequence[PartConfig], plan: PartitionPlan) -> str:
    return ",".join(f"{plan.names[c.part]}={c.notation}" for c in configs)


# -- execution ----------------------------------------------------------------

@dataclass
class _PartOps:
    weight_format: object
    act_format: object
    mul: object
    add: object
    fast32: bool


def _part_ops(cfg: PartConfig) -> _PartOps:
    return _PartOps(cfg.weight_format, cfg.act_format,
                    resolve_multiply(cfg.multiply, cfg.weight_format, cfg.act_format),
                    resolve_add(cfg.add, cfg.act_format),
                    cfg.is_full_precision())


def _check_configs(plan: PartitionPlan, configs: Sequence[PartConfig]) -> list:
    if len(configs) != plan.num_parts:
        raise ShapeError(f"{len(configs)} part configs for a plan with {plan.num_parts} parts")
    ordered = sorted(configs, key=lambda c: c.part)
    if [c.part for c in ordered] != list(range(plan.num_parts)):
        raise ShapeError("part configs must cover every part exactly once")
    return ordered


def quantize_params(w: np.ndarray, b: np.ndarray, cfg: PartConfig) -> tuple:
    fast = cfg.is_full_precision()
    if fast:
        return w.astype(np.float32), b.astype(np.float32)
    wq = arrays.quantize(w.astype(np.float64), cfg.weight_format)
    if isinstance(cfg.act_format, BinaryFormat):
        # BIN parts accumulate integers, so the bias is kept as an integer
        bq = np.rint(b.astype(np.float64))
    else:
        bq = arrays.quantize(b.astype(np.float64), cfg.weight_format)
    return wq, bq


def quantize_model(model: Model, plan: PartitionPlan, configs: Sequence[PartConfig]) -> Model:
    """Copy of ``model`` with per-layer quantized weights/biases attached."""
    plan.check(model)
    configs = _check_configs(plan, configs)
    quantized = {}
    for li in model.weighted_layers():
        cfg = configs[plan.assignment[li]]
        quantized[li] = quantize_params(model.weights[li], model.biases[li], cfg)
    return dataclasses.replace(model, quantized=quantized)


def saturation_count(values: np.ndarray, fmt) -> int:
    """How many values lie beyond the largest magnitude ``fmt`` can hold."""
    v = np.abs(np.asarray(values, dtype=np.float64))
    if isinstance(fmt, FixedFormat):
        return int(np.count_nonzero(v > float(fmt.max_value)))
    if isinstance(fmt, FloatFormat):
        q = arrays.quantize(v, fmt)
        return int(np.count_nonzero(np.isinf(q) & np.isfinite(v)))
    return 0


def _zero(fmt) -> float:
    return 1.0 if isinstance(fmt, BinaryFormat) else 0.0


def _dot_layer(cols: np.ndarray, w: np.ndarray, b: np.ndarray, ops: _PartOps) -> np.ndarray:
    """Sequential multiply-accumulate: cols (..., K) times w (U, K) -> (..., U)."""
    k_total = cols.shape[-1]
    if ops.fast32:
        acc = np.zeros(cols.shape[:-1] + (w.shape[0],), dtype=np.float32)
        for k in range(k_total):
            acc = acc + cols[..., k, None] * w[:, k]
        return acc + b
    x_in = ops.act_format
    if isinstance(x_in, BinaryFormat):
        cols = arrays.quantize_binary(cols)
    acc = np.zeros(cols.shape[:-1] + (w.shape[0],), dtype=np.float64)
    for k in range(k_total):
        acc = ops.add(acc, ops.mul(cols[..., k, None], w[:, k]))
    return ops.add(acc, b)


def _run_layer(layer, x, wq, bq, ops: _PartOps):
    if layer.kind == "conv2d":
        n = x.shape[0]
        cols = im2col(x, layer.kernel, layer.stride, layer.padding, _zero(ops.act_format))
        out = _dot_layer(cols, wq.reshape(layer.out_channels, -1), bq, ops)
        _, ho, wo = layer.output_shape(x.shape[1:])
        return out.transpose(0, 2, 1).reshape(n, layer.out_channels, ho, wo)
    if layer.kind == "dense":
        return _dot_layer(x, wq, bq, ops)
    if layer.kind == "relu":
        return np.where(x > 0, x, x.dtype.type(0))
    if layer.kind == "maxpool2d":
        return maxpool(x, layer.pool)
    return x.reshape(x.shape[0], -1)


def _enter_part(x: np.ndarray, ops: _PartOps) -> np.ndarray:
    if ops.fast32:
        with np.errstate(over="ignore"):
            return np.asarray(x).astype(np.float32)
    return arrays.quantize(np.asarray(x, dtype=np.float64), ops.act_format)


class Runner:
    """Prepared (model, plan, configs) triple that can run any span of parts."""

    def __init__(self, model: Model, plan: PartitionPlan, configs: Sequence[PartConfig]):
        plan.check(model)
        self.model = model
        self.plan = plan
        self.configs = _check_configs(plan, configs)
        self.ops = [_part_ops(c) for c in self.configs]
        q = model.quantized or {}
        self.params = {}
        for li in model.weighted_layers():
            cfg = self.configs[plan.assignment[li]]
            self.params[li] = q[li] if li in q else quantize_params(model.weights[li], model.biases[li], cfg)

    def run(self, x: np.ndarray, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
        """Run parts ``start .. stop-1`` on ``x`` (the input of part ``start``)."""
        stop = self.plan.num_parts if stop is None else stop
        if start == 0:
            x = np.asarray(x)
            per = int(np.prod(self.model.input_shape))
            if x.ndim < 1 or int(np.prod(x.shape[1:])) != per:
                raise ShapeError(f"batch of shape {x.shape} does not match model input {self.model.input_shape}")
            x = x.reshape((-1,) + self.model.input_shape)
        groups = self.plan.parts
        for p in range(start, stop):
            ops = self.ops[p]
            x = _enter_part(x, ops)
            for li in groups[p]:
                layer = self.model.layers[li]
                wq, bq = self.params.get(li, (None, None))
                x = _run_layer(layer, x, wq, bq, ops)
        return x

    def logits(self, images: np.ndarray, chunk: int = DEFAULT_CHUNK) -> np.ndarray:
        images = np.asarray(images)
        outs = [self.run(images[i:i + chunk]) for i in range(0, len(images), chunk)]
        return np.concatenate(outs).astype(np.float64) if outs else np.zeros((0, self.model.num_classes))


def predict_labels(logits: np.ndarray) -> np.ndarray:
    """Argmax readout; NaN scores never win."""
    return np.argmax(np.where(np.isnan(logits), -np.inf, logits), axis=-1)


def infer(model: Model, plan: PartitionPlan, configs: Sequence[PartConfig], image: np.ndarray):
    """Classify one image; returns ``(label, scores)``."""
    image = np.asarray(image)
    if image.size != int(np.prod(model.input_shape)):
        raise ShapeError(f"input of shape {image.shape} does not match model input {model.input_shape}")
    scores = Runner(model, plan, configs).run(image.reshape((1,) + model.input_shape))[0]
    scores = np.asarray(scores, dtype=np.float64)
    return int(predict_labels(scores[None])[0]), scores


def reference_forward(model: Model, images: np.ndarray) -> np.ndarray:
    """Plain binary32 forward pass with sequential accumulation.

    Convolutions are computed directly from shifted input windows, summing
    over (input channel, kernel row, kernel column) in that order and adding
    the bias last.
    """
    x = np.asarray(images, dtype=np.float32).reshape((-1,) + model.input_shape)
    for li, layer in enumerate(model.layers):
        if layer.kind == "conv2d":
            w, b = model.weights[li], model.biases[li]
            p, s, k = layer.padding, layer.stride, layer.kernel
            xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
            _, ho, wo = layer.output_shape(x.shape[1:])
            acc = np.zeros((x.shape[0], layer.out_channels, ho, wo), dtype=np.float32)
            for c in range(layer.in_channels):
                for ky in range(k):
                    for kx in range(k):
                        window = xp[:, c, ky:ky + s * (ho - 1) + 1:s, kx:kx + s * (wo - 1) + 1:s]
                        acc = acc + window[:, None] * w[None, :, c, ky, kx, None, None]
            x = acc + b[None, :, None, None]
        elif layer.kind == "dense":
            w, b = model.weights[li], model.biases[li]
            acc = np.zeros((x.shape[0], layer.units), dtype=np.float32)
            for j in range(layer.in_features):
                acc = acc + x[:, j, None] * w[None, :, j]
            x = acc + b
        elif layer.kind == "relu":
            x = np.where(x > 0, x, np.float32(0))
        elif layer.kind == "maxpool2d":
            x = maxpool(x, layer.pool)
        else:
            x = x.reshape(x.shape[0], -1)
    return x


@dataclass(frozen=True)
class Evaluation:
    accuracy: float
    correct: int
    total: int
    relative: Optional[float] = None


def evaluate(model: Model, plan: PartitionPlan, configs: Sequence[PartConfig], dataset,
             baseline: Optional[float] = None, threads: int = 1,
             chunk: int = DEFAULT_CHUNK) -> Evaluation:
    """Top-1 accuracy of ``configs`` on ``dataset`` (``.images``, ``.labels``).

    ``relative`` is ``accuracy / baseline`` when a baseline accuracy is given.
    Shards run on up to ``threads`` worker threads.
    """
    images, labels = dataset.images, np.asarray(dataset.labels)
    if len(labels) == 0:
        raise BitscopeError("cannot evaluate on an empty dataset")
    runner = Runner(model, plan, configs)
    starts = range(0, len(labels), chunk)

    def shard(i):
        out = runner.run(images[i:i + chunk])
        return int(np.count_nonzero(predict_labels(np.asarray(out, dtype=np.float64)) == labels[i:i + chunk]))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            correct = sum(pool.map(shard, starts))
    else:
        correct = sum(shard(i) for i in starts)
    acc = correct / len(labels)
    rel = None if baseline is None else (acc / baseline if baseline else float("nan"))
    return Evaluation(acc, correct, len(labels), rel)
