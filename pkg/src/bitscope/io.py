"""Model files, IDX datasets and JSON artifacts.

A saved model is a directory holding ``model.json`` (layer list, tensor
descriptors, blob checksum) and ``weights.bin`` (little-endian binary32,
row-major, weights then bias of each weighted layer).
"""

from __future__ import annotations

import gzip
import hashlib
import json
import math
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (BitscopeError, ChecksumError, DataError, IdxError, ManifestError,
                     ModelFormatError, VersionError)
from .nn.model import LayerSpec, Model

MODEL_FORMAT = "bitscope-model"
MODEL_VERSION = 1
MANIFEST_NAME = "model.json"
BLOB_NAME = "weights.bin"

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
_IDX_DTYPES = {0x08: np.dtype(">u1"), 0x09: np.dtype(">i1"), 0x0B: np.dtype(">i2"),
               0x0C: np.dtype(">i4"), 0x0D: np.dtype(">f4"), 0x0E: np.dtype(">f8")}
MAX_IDX_ITEMS = 1 << 28


def _atomic_write(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- JSON artifacts -------------------------------------------------------------

def dumps_json(obj) -> str:
    """Canonical JSON text: fixed key order and indentation, trailing newline."""
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    _atomic_write(Path(path), dumps_json(obj).encode())


def read_json(path, what: str = "file"):
    try:
        with open(path, "rb") as fh:
            return json.loads(fh.read().decode("utf-8"))
    except FileNotFoundError:
        raise DataError(f"{what} not found: {path}") from None
    except (UnicodeDecodeError, ValueError, RecursionError) as exc:
        raise DataError(f"{what} {path} is not valid JSON: {exc}") from None


# -- models ---------------------------------------------------------------------

def _tensor_list(model: Model):
    for li in model.weighted_layers():
        name = model.layers[li].name or f"layer{li}"
        yield f"{name}.weight", li, "weight", model.weights[li]
        yield f"{name}.bias", li, "bias", model.biases[li]


def model_to_bytes(model: Model) -> tuple:
    """(manifest dict, blob bytes) of a model."""
    chunks, tensors, offset = [], [], 0
    for name, li, role, arr in _tensor_list(model):
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        tensors.append({"name": name, "layer": li, "role": role, "dtype": "binary32",
                        "shape": list(arr.shape), "offset": offset, "length": len(data)})
        chunks.append(data)
        offset += len(data)
    blob = b"".join(chunks)
    manifest = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "input_shape": list(model.input_shape),
        "layers": [layer.to_dict() for layer in model.layers],
        "tensors": tensors,
        "blob": BLOB_NAME,
        "blob_size": len(blob),
        "sha256": hashlib.sha256(blob).hexdigest(),
    }
    return manifest, blob


def save_model(model: Model, path) -> Path:
    """Write ``model.json`` and ``weights.bin`` into directory ``path``."""
    path = Path(path)
    manifest, blob = model_to_bytes(model)
    _atomic_write(path / BLOB_NAME, blob)
    _atomic_write(path / MANIFEST_NAME, dumps_json(manifest).encode())
    return path


def _need(d, key, kind, what="manifest"):
    if not isinstance(d, dict) or key not in d:
        raise ManifestError(f"{what} is missing {key!r}")
    v = d[key]
    if kind is int and (not isinstance(v, int) or isinstance(v, bool)):
        raise ManifestError(f"{what} field {key!r} must be an integer")
    if kind is not int and not isinstance(v, kind):
        raise ManifestError(f"{what} field {key!r} has the wrong type")
    return v


def model_from_bytes(manifest, blob: bytes) -> Model:
    """Validate a manifest against its blob and build the model."""
    if not isinstance(manifest, dict):
        raise ManifestError("manifest must be a JSON object")
    if manifest.get("format") != MODEL_FORMAT:
        raise ManifestError(f"not a model manifest (format={manifest.get('format')!r})")
    version = manifest.get("version")
    if version != MODEL_VERSION:
        raise VersionError(f"unsupported model format version {version!r} (expected {MODEL_VERSION})")
    size = _need(manifest, "blob_size", int)
    digest = _need(manifest, "sha256", str)
    if len(blob) != size or hashlib.sha256(blob).hexdigest() != digest:
        raise ChecksumError(f"weights blob checksum mismatch ({len(blob)} bytes, manifest says {size})")
    shape = _need(manifest, "input_shape", list)
    if not shape or not all(isinstance(v, int) and not isinstance(v, bool) and v > 0 for v in shape):
        raise ManifestError("input_shape must be a list of positive integers")
    try:
        layers = [LayerSpec.from_dict(d) for d in _need(manifest, "layers", list)]
    except (BitscopeError, TypeError, AttributeError) as exc:
        raise ManifestError(f"bad layer list: {exc}") from None
    weights, biases, spans = {}, {}, []
    for t in _need(manifest, "tensors", list):
        li = _need(t, "layer", int, "tensor")
        role = _need(t, "role", str, "tensor")
        off = _need(t, "offset", int, "tensor")
        length = _need(t, "length", int, "tensor")
        tshape = _need(t, "shape", list, "tensor")
        if t.get("dtype") != "binary32":
            raise ManifestError(f"tensor dtype must be binary32, got {t.get('dtype')!r}")
        if not all(isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in tshape):
            raise ManifestError("tensor shape must be a list of non-negative integers")
        if off < 0 or length < 0 or off + length > len(blob):
            raise ManifestError(f"manifest out of bounds: tensor {t.get('name')!r} spans "
                                f"[{off}, {off + length}) of a {len(blob)}-byte blob")
        if length != 4 * math.prod(tshape):
            raise ManifestError(f"tensor {t.get('name')!r} length does not match its shape")
        if not 0 <= li < len(layers) or not layers[li].weighted or role not in ("weight", "bias"):
            raise ManifestError(f"tensor {t.get('name')!r} refers to no weighted layer")
        store = weights if role == "weight" else biases
        if li in store:
            raise ManifestError(f"duplicate {role} tensor for layer {li}")
        spans.append((off, off + length))
        store[li] = np.frombuffer(blob, dtype="<f4", count=length // 4, offset=off) \
            .astype(np.float32).reshape(tshape)
    spans.sort()
    for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
        if b0 < a1:
            raise ManifestError("tensor byte ranges overlap")
    try:
        return Model(tuple(shape), layers, weights, biases)
    except BitscopeError as exc:
        raise ManifestError(f"inconsistent model: {exc}") from None


def load_model(path) -> Model:
    """Load a model directory (or the path of its ``model.json``)."""
    path = Path(path)
    mpath = path if path.suffix == ".json" else path / MANIFEST_NAME
    try:
        manifest = json.loads(mpath.read_bytes().decode("utf-8"))
    except FileNotFoundError:
        raise DataError(f"model manifest not found: {mpath}") from None
    except (UnicodeDecodeError, ValueError, RecursionError) as exc:
        raise ManifestError(f"malformed manifest {mpath}: {exc}") from None
    blob_name = manifest.get("blob", BLOB_NAME) if isinstance(manifest, dict) else BLOB_NAME
    if not isinstance(blob_name, str) or Path(blob_name).name != blob_name:
        raise ManifestError("manifest blob must be a plain file name")
    try:
        blob = (mpath.parent / blob_name).read_bytes()
    except FileNotFoundError:
        raise ChecksumError(f"weights blob missing: {mpath.parent / blob_name}") from None
    return model_from_bytes(manifest, blob)


# -- IDX datasets ---------------------------------------------------------------

@dataclass
class Dataset:
    images: np.ndarray  # (N, 28, 28) float32 in [0, 1)
    labels: np.ndarray  # (N,) int64

    def __len__(self):
        return len(self.labels)

    def take(self, n: Optional[int]) -> "Dataset":
        if n is None or n >= len(self):
            return self
        return Dataset(self.images[:n], self.labels[:n])


def _maybe_gunzip(data: bytes) -> bytes:
    if data[:2] == b"\x1f\x8b":
        try:
            return gzip.decompress(data)
        except (OSError, EOFError, zlib.error) as exc:
            raise IdxError(f"corrupt gzip stream: {exc}") from None
    return data


def parse_idx(data: bytes) -> np.ndarray:
    """Decode an IDX byte string (gzip allowed) into an array."""
    data = _maybe_gunzip(data)
    if len(data) < 4:
        raise IdxError("short read: IDX header needs 4 bytes")
    zero, code, ndim = struct.unpack(">HBB", data[:4])
    if zero != 0 or code not in _IDX_DTYPES or ndim == 0:
        raise IdxError(f"bad IDX magic 0x{data[:4].hex()}")
    head = 4 + 4 * ndim
    if len(data) < head:
        raise IdxError("short read: truncated IDX dimensions")
    dims = struct.unpack(f">{ndim}I", data[4:head])
    count = math.prod(dims)
    if count > MAX_IDX_ITEMS:
        raise IdxError(f"IDX dimensions {dims} are implausibly large")
    dtype = _IDX_DTYPES[code]
    need = head + count * dtype.itemsize
    if len(data) < need:
        raise IdxError(f"short read: expected {need} bytes, got {len(data)}")
    if len(data) > need:
        raise IdxError(f"{len(data) - need} trailing bytes after IDX payload")
    return np.frombuffer(data, dtype=dtype, count=count, offset=head).reshape(dims)


def _read_idx(path, magic: int) -> np.ndarray:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError:
        raise DataError(f"dataset file not found: {path}") from None
    arr = parse_idx(data)
    raw = _maybe_gunzip(data)[:4]
    if struct.unpack(">I", raw)[0] != magic:
        raise IdxError(f"{path}: magic 0x{raw.hex()} is not 0x{magic:08x}")
    return arr


def dataset_from_arrays(images: np.ndarray, labels: np.ndarray) -> Dataset:
    if images.ndim != 3:
        raise IdxError(f"images must be N x rows x cols, got shape {images.shape}")
    if labels.ndim != 1:
        raise IdxError("labels must be one-dimensional")
    if len(images) != len(labels):
        raise IdxError(f"count mismatch: {len(images)} images but {len(labels)} labels")
    if labels.size and (labels.min() < 0 or labels.max() > 9):
        raise IdxError("labels must lie in 0..9")
    return Dataset(images.astype(np.float32) / np.float32(256), labels.astype(np.int64))


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label pair; pixels are scaled by 1/256 into [0, 1)."""
    return dataset_from_arrays(_read_idx(images_path, IDX_IMAGES_MAGIC),
                               _read_idx(labels_path, IDX_LABELS_MAGIC))


def idx_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype != np.uint8:
        raise IdxError("only uint8 IDX payloads are written")
    header = struct.pack(">HBB", 0, 0x08, arr.ndim) + struct.pack(f">{arr.ndim}I", *arr.shape)
    return header + arr.tobytes()


def write_idx(path, arr: np.ndarray, compress: Optional[bool] = None) -> None:
    data = idx_bytes(arr)
    if compress is None:
        compress = str(path).endswith(".gz")
    if compress:
        data = gzip.compress(data, mtime=0)
    _atomic_write(Path(path), data)


SPLITS = {"train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
          "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")}


def default_data_dir() -> Path:
    return Path(os.environ.get("LOP_DATA_DIR", "data"))


def split_paths(root, split: str) -> tuple:
    """Paths of a split's IDX files, preferring uncompressed names."""
    root = Path(root)
    out = []
    for stem in SPLITS[split]:
        plain, gz = root / stem, root / (stem + ".gz")
        out.append(plain if plain.exists() or not gz.exists() else gz)
    return tuple(out)


def load_split(root, split: str = "test", limit: Optional[int] = None) -> Dataset:
    """Load the ``train`` or ``test`` split from a dataset directory."""
    if split not in SPLITS:
        raise DataError(f"unknown split {split!r}")
    return load_idx(*split_paths(root, split)).take(limit)


def mnist_subset_csv() -> Path:
    """Location of the 5000-image MNIST sample shipped with mlxtend."""
    try:
        import mlxtend.data
    except ImportError:
        raise DataError("the MNIST sample needs the optional 'mlxtend' package "
                        "(pip install mlxtend) or an explicit --csv path") from None
    return Path(mlxtend.data.__file__).parent / "data" / "mnist_5k.csv.gz"


def build_mnist_subset(out_dir, csv_path=None, train_per_class: int = 400,
                       seed: int = 0) -> dict:
    """Write a stratified train/test IDX split of a labelled CSV sample.

    Rows are ``784 pixels, label``.  The first ``train_per_class`` images of
    each digit go to the training split and the remainder to the test split;
    both splits are shuffled with ``seed``.
    """
    path = Path(csv_path) if csv_path else mnist_subset_csv()
    try:
        with open(path, "rb") as fh:
            text = _maybe_gunzip(fh.read()).decode("ascii")
        table = np.loadtxt(text.splitlines(), delimiter=",", dtype=np.int64)
    except (OSError, ValueError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read CSV sample {path}: {exc}") from None
    if table.ndim != 2 or table.shape[1] != 785:
        raise DataError(f"CSV sample must have 785 columns, got {table.shape}")
    images = table[:, :784].clip(0, 255).astype(np.uint8).reshape(-1, 28, 28)
    labels = table[:, 784].astype(np.uint8)
    train_idx, test_idx = [], []
    for digit in range(10):
        idx = np.flatnonzero(labels == digit)
        train_idx.extend(idx[:train_per_class])
        test_idx.extend(idx[train_per_class:])
    rng = np.random.default_rng(seed)
    counts = {}
    for split, idx in (("train", train_idx), ("test", test_idx)):
        idx = rng.permutation(np.asarray(idx, dtype=np.int64))
        img_name, lbl_name = SPLITS[split]
        write_idx(Path(out_dir) / (img_name + ".gz"), images[idx])
        write_idx(Path(out_dir) / (lbl_name + ".gz"), labels[idx])
        counts[split] = len(idx)
    return counts


__all__ = [
    "Dataset", "ModelFormatError", "build_mnist_subset", "dataset_from_arrays", "default_data_dir",
    "dumps_json", "idx_bytes", "load_idx", "load_model", "load_split", "model_from_bytes",
    "model_to_bytes", "parse_idx", "read_json", "save_model", "write_idx", "write_json",
]
