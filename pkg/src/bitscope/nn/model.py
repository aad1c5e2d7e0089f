"""Layer specifications, model container and the plain float32 forward pass."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..errors import ShapeError

LAYER_KINDS = ("conv2d", "maxpool2d", "dense", "relu", "flatten")
WEIGHTED = ("conv2d", "dense")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    name: str = ""
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 0
    stride: int = 1
    padding: int = 0
    in_features: int = 0
    units: int = 0
    pool: int = 2

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ShapeError(f"unknown layer kind {self.kind!r}")

    @property
    def weighted(self) -> bool:
        return self.kind in WEIGHTED

    def weight_shape(self) -> tuple:
        if self.kind == "conv2d":
            return (self.out_channels, self.in_channels, self.kernel, self.kernel)
        if self.kind == "dense":
            return (self.units, self.in_features)
        return ()

    def bias_shape(self) -> tuple:
        if self.kind == "conv2d":
            return (self.out_channels,)
        if self.kind == "dense":
            return (self.units,)
        return ()

    def output_shape(self, in_shape: tuple) -> tuple:
        """Shape of one sample after this layer (batch axis excluded)."""
        if self.kind == "conv2d":
            if len(in_shape) != 3 or in_shape[0] != self.in_channels:
                raise ShapeError(f"{self.name or 'conv2d'} expects ({self.in_channels}, H, W), got {in_shape}")
            _, h, w = in_shape
            ho = (h + 2 * self.padding - self.kernel) // self.stride + 1
            wo = (w + 2 * self.padding - self.kernel) // self.stride + 1
            if ho < 1 or wo < 1:
                raise ShapeError(f"{self.name or 'conv2d'}: kernel larger than padded input {in_shape}")
            return (self.out_channels, ho, wo)
        if self.kind == "maxpool2d":
            if len(in_shape) != 3:
                raise ShapeError(f"maxpool2d expects (C, H, W), got {in_shape}")
            c, h, w = in_shape
            if h < self.pool or w < self.pool:
                raise ShapeError(f"maxpool2d window {self.pool} larger than input {in_shape}")
            return (c, h // self.pool, w // self.pool)
        if self.kind == "dense":
            if len(in_shape) != 1 or in_shape[0] != self.in_features:
                raise ShapeError(f"{self.name or 'dense'} expects ({self.in_features},), got {in_shape}")
            return (self.units,)
        if self.kind == "flatten":
            return (int(np.prod(in_shape)),)
        return tuple(in_shape)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "name": self.name}
        if self.kind == "conv2d":
            d.update(in_channels=self.in_channels, out_channels=self.out_channels,
                     kernel=self.kernel, stride=self.stride, padding=self.padding)
        elif self.kind == "dense":
            d.update(in_features=self.in_features, units=self.units)
        elif self.kind == "maxpool2d":
            d.update(pool=self.pool)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        allowed = set(cls.__dataclass_fields__)
        unknown = set(d) - allowed
        if unknown:
            raise ShapeError(f"unknown layer fields {sorted(unknown)}")
        for k, v in d.items():
            if k in ("kind", "name"):
                if not isinstance(v, str):
                    raise ShapeError(f"layer field {k} must be a string")
            elif not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ShapeError(f"layer field {k} must be a non-negative integer")
        if "kind" not in d:
            raise ShapeError("layer is missing its kind")
        spec = cls(**d)
        if spec.kind == "conv2d" and (spec.kernel < 1 or spec.stride < 1 or spec.out_channels < 1):
            raise ShapeError("conv2d needs positive kernel, stride and channels")
        if spec.kind == "dense" and (spec.units < 1 or spec.in_features < 1):
            raise ShapeError("dense needs positive units and in_features")
        if spec.kind == "maxpool2d" and spec.pool < 1:
            raise ShapeError("maxpool2d needs a positive window")
        return spec


@dataclass
class Model:
    """Ordered layers plus binary32 master parameters keyed by layer index.

    ``quantized`` holds per-layer ``(weights, bias)`` value arrays produced by
    :func:`bitscope.nn.engine.quantize_model`; masters are never modified.
    """

    input_shape: tuple
    layers: list
    weights: dict = field(default_factory=dict)
    biases: dict = field(default_factory=dict)
    quantized: Optional[dict] = None

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)
        self.shapes()
        for li, layer in enumerate(self.layers):
            if layer.weighted:
                for store, shape, what in ((self.weights, layer.weight_shape(), "weights"),
                                           (self.biases, layer.bias_shape(), "bias")):
                    if li not in store:
                        raise ShapeError(f"layer {li} ({layer.name}) has no {what}")
                    if tuple(store[li].shape) != shape:
                        raise ShapeError(f"layer {li} ({layer.name}) {what} shape {store[li].shape} != {shape}")

    def shapes(self) -> list:
        """Per-sample shape after each layer; raises ShapeError when layers do not chain."""
        out, shape = [], self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
            out.append(shape)
        return out

    @property
    def num_classes(self) -> int:
        return self.shapes()[-1][0]

    def weighted_layers(self) -> list:
        return [i for i, layer in enumerate(self.layers) if layer.weighted]

    def op_counts(self) -> list:
        """(multiplies, adds, parameters) per layer for one inference."""
        counts, shape = [], self.input_shape
        for layer in self.layers:
            out = layer.output_shape(shape)
            if layer.kind == "conv2d":
                k = layer.in_channels * layer.kernel * layer.kernel
                n_out = int(np.prod(out))
                counts.append((n_out * k, n_out * k, layer.out_channels * (k + 1)))
            elif layer.kind == "dense":
                counts.append((layer.units * layer.in_features, layer.units * layer.in_features,
                               layer.units * (layer.in_features + 1)))
            else:
                counts.append((0, 0, 0))
            shape = out
        return counts


# -- architectures ------------------------------------------------------------

def architecture(name: str = "desk") -> tuple:
    """(input_shape, layers) of a named architecture.

    ``desk``: 5x5x8 conv, pool, 5x5x16 conv, pool, 128-unit and 10-unit dense.
    ``tiny``: a 3x3x4 conv network used for fast tests.
    """
    if name == "desk":
        return (1, 28, 28), [
            LayerSpec("conv2d", "CONV1", in_channels=1, out_channels=8, kernel=5, padding=2),
            LayerSpec("relu"), LayerSpec("maxpool2d", pool=2),
            LayerSpec("conv2d", "CONV2", in_channels=8, out_channels=16, kernel=5, padding=2),
            LayerSpec("relu"), LayerSpec("maxpool2d", pool=2),
            LayerSpec("flatten"),
            LayerSpec("dense", "FC1", in_features=784, units=128), LayerSpec("relu"),
            LayerSpec("dense", "FC2", in_features=128, units=10),
        ]
    if name == "tiny":
        return (1, 28, 28), [
            LayerSpec("conv2d", "CONV1", in_channels=1, out_channels=4, kernel=3, padding=1),
            LayerSpec("relu"), LayerSpec("maxpool2d", pool=4),
            LayerSpec("flatten"),
            LayerSpec("dense", "FC1", in_features=196, units=32), LayerSpec("relu"),
            LayerSpec("dense", "FC2", in_features=32, units=10),
        ]
    raise ShapeError(f"unknown architecture {name!r} (choose 'desk' or 'tiny')")


ARCHITECTURES = ("desk", "tiny")


def init_model(arch: str = "desk", seed: int = 0) -> Model:
    """He-normal initialized float32 model."""
    input_shape, layers = architecture(arch)
    rng = np.random.default_rng(seed)
    weights, biases = {}, {}
    for li, layer in enumerate(layers):
        if layer.weighted:
            shape = layer.weight_shape()
            fan_in = int(np.prod(shape[1:]))
            weights[li] = (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)
            biases[li] = np.zeros(layer.bias_shape(), dtype=np.float32)
    return Model(input_shape, layers, weights, biases)


# -- float32 forward ----------------------------------------------------------

def im2col(x: np.ndarray, kernel: int, stride: int, padding: int, pad_value=0.0) -> np.ndarray:
    """(N, C, H, W) -> (N, Ho*Wo, C*k*k) with columns ordered (channel, row, col)."""
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)),
                   constant_values=pad_value)
    win = np.lib.stride_tricks.sliding_window_view(x, (kernel, kernel), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    n, c, ho, wo = win.shape[:4]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n, ho * wo, c * kernel * kernel)


def maxpool(x: np.ndarray, pool: int) -> np.ndarray:
    n, c, h, w = x.shape
    ho, wo = h // pool, w // pool
    x = x[:, :, :ho * pool, :wo * pool]
    return x.reshape(n, c, ho, pool, wo, pool).max(axis=(3, 5))


def forward_float32(model: Model, x: np.ndarray,
                    hook: Optional[Callable[[int, np.ndarray], None]] = None) -> np.ndarray:
    """Fast binary32 forward pass using matrix products.

    ``hook(layer_index, output)`` sees every layer output.  Summation order
    follows the BLAS kernel, so logits may differ in the last bits from the
    sequential-accumulation engine.
    """
    x = np.asarray(x, dtype=np.float32).reshape((-1,) + model.input_shape)
    for li, layer in enumerate(model.layers):
        if layer.kind == "conv2d":
            n = x.shape[0]
            cols = im2col(x, layer.kernel, layer.stride, layer.padding)
            w = model.weights[li].reshape(layer.out_channels, -1)
            out = cols @ w.T + model.biases[li]
            _, ho, wo = layer.output_shape(x.shape[1:])
            x = out.transpose(0, 2, 1).reshape(n, layer.out_channels, ho, wo)
        elif layer.kind == "dense":
            x = x @ model.weights[li].T + model.biases[li]
        elif layer.kind == "relu":
            x = np.maximum(x, np.float32(0))
        elif layer.kind == "maxpool2d":
            x = maxpool(x, layer.pool)
        else:
            x = x.reshape(x.shape[0], -1)
        if hook is not None:
            hook(li, x)
    return x
