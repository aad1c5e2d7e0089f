"""Minimal binary32 trainer (SGD with momentum) for the reference models."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from ..errors import DataError
from .model import Model, im2col, init_model


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    # cosine decay of the learning rate to zero over all steps
    cosine: bool = True
    # random translation of each training image by up to this many pixels
    shift: int = 2
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _col2im(dcols, x_shape, kernel, stride, padding):
    n, c, h, w = x_shape
    hp, wp = h + 2 * padding, w + 2 * padding
    ho = (hp - kernel) // stride + 1
    wo = (wp - kernel) // stride + 1
    d = dcols.reshape(n, ho, wo, c, kernel, kernel)
    out = np.zeros((n, c, hp, wp), dtype=dcols.dtype)
    for ky in range(kernel):
        for kx in range(kernel):
            out[:, :, ky:ky + stride * ho:stride, kx:kx + stride * wo:stride] += \
                d[:, :, :, :, ky, kx].transpose(0, 3, 1, 2)
    return out[:, :, padding:padding + h, padding:padding + w]


def _forward(model: Model, x):
    cache = []
    for li, layer in enumerate(model.layers):
        if layer.kind == "conv2d":
            cols = im2col(x, layer.kernel, layer.stride, layer.padding)
            w = model.weights[li].reshape(layer.out_channels, -1)
            out = cols @ w.T + model.biases[li]
            _, ho, wo = layer.output_shape(x.shape[1:])
            cache.append((x.shape, cols))
            x = out.transpose(0, 2, 1).reshape(x.shape[0], layer.out_channels, ho, wo)
        elif layer.kind == "dense":
            cache.append(x)
            x = x @ model.weights[li].T + model.biases[li]
        elif layer.kind == "relu":
            cache.append(x > 0)
            x = np.where(x > 0, x, np.float32(0))
        elif layer.kind == "maxpool2d":
            n, c, h, w = x.shape
            p = layer.pool
            win = x[:, :, :h // p * p, :w // p * p].reshape(n, c, h // p, p, w // p, p)
            win = win.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // p, w // p, p * p)
            arg = win.argmax(axis=-1)
            cache.append((x.shape, arg))
            x = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
        else:
            cache.append(x.shape)
            x = x.reshape(x.shape[0], -1)
    return x, cache


def _backward(model: Model, cache, grad):
    gw, gb = {}, {}
    for li in range(len(model.layers) - 1, -1, -1):
        layer, c = model.layers[li], cache[li]
        if layer.kind == "conv2d":
            x_shape, cols = c
            n = grad.shape[0]
            g = grad.reshape(n, layer.out_channels, -1).transpose(0, 2, 1)
            g2 = g.reshape(-1, layer.out_channels)
            gw[li] = (g2.T @ cols.reshape(-1, cols.shape[-1])).reshape(layer.weight_shape())
            gb[li] = g2.sum(axis=0)
            if li > 0:
                dcols = g @ model.weights[li].reshape(layer.out_channels, -1)
                grad = _col2im(dcols, x_shape, layer.kernel, layer.stride, layer.padding)
        elif layer.kind == "dense":
            gw[li] = grad.T @ c
            gb[li] = grad.sum(axis=0)
            grad = grad @ model.weights[li]
        elif layer.kind == "relu":
            grad = np.where(c, grad, np.float32(0))
        elif layer.kind == "maxpool2d":
            x_shape, arg = c
            n, ch, h, w = x_shape
            p = layer.pool
            ho, wo = h // p, w // p
            win = np.zeros((n, ch, ho, wo, p * p), dtype=grad.dtype)
            np.put_along_axis(win, arg[..., None], grad[..., None], axis=-1)
            win = win.reshape(n, ch, ho, wo, p, p).transpose(0, 1, 2, 4, 3, 5)
            full = np.zeros(x_shape, dtype=grad.dtype)
            full[:, :, :ho * p, :wo * p] = win.reshape(n, ch, ho * p, wo * p)
            grad = full
        else:
            grad = grad.reshape(c)
    return gw, gb


def softmax_xent(logits, labels):
    """Mean cross-entropy and its gradient with respect to the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    n = len(labels)
    loss = float(-np.log(p[np.arange(n), labels] + 1e-12).mean())
    g = p
    g[np.arange(n), labels] -= 1
    return loss, (g / n).astype(np.float32)


def _shift_batch(x, shift, rng):
    if shift <= 0:
        return x
    n, c, h, w = x.shape
    padded = np.pad(x, ((0, 0), (0, 0), (shift, shift), (shift, shift)))
    offs = rng.integers(0, 2 * shift + 1, size=(n, 2))
    out = np.empty_like(x)
    for k, (dy, dx) in enumerate(offs):
        out[k] = padded[k, :, dy:dy + h, dx:dx + w]
    return out


def train_reference(arch: str, dataset, settings: TrainSettings = TrainSettings(),
                    log: Optional[Callable[[str], None]] = None) -> Model:
    """Train a float32 model of architecture ``arch`` on ``dataset``.

    Deterministic for a given seed on one platform.  ``epochs=0`` returns the
    freshly initialized network.
    """
    images = np.asarray(dataset.images, dtype=np.float32)
    labels = np.asarray(dataset.labels, dtype=np.int64)
    if images.ndim < 3 or len(images) == 0 or len(images) != len(labels):
        raise DataError("training set is empty or images and labels disagree")
    model = init_model(arch, settings.seed)
    images = images.reshape((-1,) + model.input_shape)
    if labels.min() < 0 or labels.max() >= model.num_classes:
        raise DataError(f"labels must lie in 0..{model.num_classes - 1}")
    rng = np.random.default_rng(settings.seed + 1)
    n = len(labels)
    steps_per_epoch = math.ceil(n / settings.batch_size)
    total = max(1, settings.epochs * steps_per_epoch)
    vel_w = {li: np.zeros_like(w) for li, w in model.weights.items()}
    vel_b = {li: np.zeros_like(b) for li, b in model.biases.items()}
    step = 0
    for epoch in range(settings.epochs):
        order = rng.permutation(n)
        running = 0.0
        for s in range(0, n, settings.batch_size):
            idx = order[s:s + settings.batch_size]
            x = _shift_batch(images[idx], settings.shift, rng)
            logits, cache = _forward(model, x)
            loss, g = softmax_xent(logits, labels[idx])
            running += loss * len(idx)
            gw, gb = _backward(model, cache, g)
            lr = settings.lr * (0.5 * (1 + math.cos(math.pi * step / total)) if settings.cosine else 1.0)
            lr = np.float32(lr)
            for li in model.weights:
                gwi = gw[li] + np.float32(settings.weight_decay) * model.weights[li]
                vel_w[li] = np.float32(settings.momentum) * vel_w[li] + gwi
                vel_b[li] = np.float32(settings.momentum) * vel_b[li] + gb[li]
                model.weights[li] = (model.weights[li] - lr * vel_w[li]).astype(np.float32)
                model.biases[li] = (model.biases[li] - lr * vel_b[li]).astype(np.float32)
            step += 1
        if log is not None:
            log(f"epoch {epoch + 1}/{settings.epochs} loss {running / n:.4f}")
    return model
