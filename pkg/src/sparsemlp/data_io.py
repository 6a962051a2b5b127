"""Dataset ingestion, augmentation, synthetic data, and model persistence.

CIFAR-10 is read from the standard binary batches (1 label byte + 3072
channel-planar pixel bytes per record). Models persist as a directory of
NPY tensors plus a versioned JSON manifest; sparse weights store values,
column indices, and row pointers (4-byte floats and 4-byte signed ints).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._version import __version__ as _library_version
from .errors import DatasetIOError, FormatError, InvalidArgumentError
from .nn import (
    ActivationLayer,
    BatchNormLayer,
    DenseLinearLayer,
    DropoutLayer,
    SparseLinearLayer,
    activation_from_name,
    optimizer_from_dict,
)
from .tensor_core import SparsityPattern
from .train import Sequential
from .sparsity import Rng

__all__ = [
    "Dataset",
    "CIFAR10_MEAN",
    "CIFAR10_STD",
    "load_cifar10",
    "normalize_pixels",
    "unnormalize_pixels",
    "augment_images",
    "make_augmenter",
    "synthetic_blobs",
    "save_npy",
    "load_npy",
    "save_model",
    "load_model",
    "model_size_report",
    "SizeReport",
]

# Train-split channel statistics of CIFAR-10 in [0, 1] scale (R, G, B).
CIFAR10_MEAN = np.array([0.4914, 0.4822, 0.4465])
CIFAR10_STD = np.array([0.2470, 0.2435, 0.2616])

_CIFAR_TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
_CIFAR_TEST_FILE = "test_batch.bin"
_CIFAR_RECORD = 3073
_CIFAR_RECORDS_PER_FILE = 10000
_CIFAR_CLASSES = 10


@dataclass
class Dataset:
    """Column-per-example dataset: X is features x N, T is one-hot classes x N."""

    Xtrain: np.ndarray
    Ttrain: np.ndarray
    Xtest: np.ndarray | None = None
    Ttest: np.ndarray | None = None
    raw_train: np.ndarray | None = None  # uint8 (N, 3072), kept for augmentation
    channel_mean: np.ndarray | None = None
    channel_std: np.ndarray | None = None

    @property
    def feature_count(self) -> int:
        return self.Xtrain.shape[0]

    @property
    def n_train(self) -> int:
        return self.Xtrain.shape[1]

    @property
    def n_test(self) -> int:
        return 0 if self.Xtest is None else self.Xtest.shape[1]

    @property
    def n_classes(self) -> int:
        return self.Ttrain.shape[0]


def _one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    t = np.zeros((n_classes, len(labels)), dtype=np.float32)
    t[labels, np.arange(len(labels))] = 1.0
    return t


def normalize_pixels(raw: np.ndarray, mean=CIFAR10_MEAN, std=CIFAR10_STD) -> np.ndarray:
    """(pixel/255 - mean_c) / std_c per channel plane.

    Evaluated as one float64 affine transform with a single rounding into
    float32, so un-normalizing recovers raw pixels to within one ulp of
    the 0..255 scale. Chunked to keep temporaries small."""
    scale = 1.0 / (255.0 * np.asarray(std, dtype=np.float64))
    offset = -np.asarray(mean, dtype=np.float64) / np.asarray(std, dtype=np.float64)
    flat = raw.reshape(-1, raw.shape[-1]) if raw.ndim > 1 else raw.reshape(1, -1)
    out = np.empty(flat.shape, dtype=np.float32)
    step = 4096
    for start in range(0, flat.shape[0], step):
        chunk = flat[start : start + step].reshape(-1, 3, 1024).astype(np.float64)
        chunk *= scale[None, :, None]
        chunk += offset[None, :, None]
        out[start : start + step] = chunk.reshape(-1, flat.shape[1])
    return out.reshape(raw.shape)


def unnormalize_pixels(x: np.ndarray, mean=CIFAR10_MEAN, std=CIFAR10_STD) -> np.ndarray:
    """Inverse of normalize_pixels, back to the 0..255 scale (float64)."""
    x = np.asarray(x, dtype=np.float64)
    planes = x.reshape(-1, 3, 1024)
    out = (planes * std[None, :, None] + mean[None, :, None]) * 255.0
    return out.reshape(x.shape)


def _read_cifar_file(path: Path):
    if not path.is_file():
        raise DatasetIOError(f"missing CIFAR-10 batch file: {path}")
    data = np.fromfile(path, dtype=np.uint8)
    expected = _CIFAR_RECORD * _CIFAR_RECORDS_PER_FILE
    if data.size != expected:
        raise DatasetIOError(
            f"CIFAR-10 batch file {path} has {data.size} bytes, expected {expected}"
        )
    records = data.reshape(_CIFAR_RECORDS_PER_FILE, _CIFAR_RECORD)
    labels = records[:, 0]
    if labels.max() >= _CIFAR_CLASSES:
        raise FormatError(f"label byte > 9 in {path}")
    return labels.astype(np.int64), records[:, 1:]


def load_cifar10(dir_path, keep_raw: bool = False) -> Dataset:
    """Load the 6 standard binary batches (5 train + 1 test) from a
    directory, scale to [0, 1], and normalize per channel.

    ``keep_raw`` retains the raw uint8 training pixels for augmentation.
    """
    root = Path(dir_path)
    nested = root / "cifar-10-batches-bin"
    if not (root / _CIFAR_TEST_FILE).is_file() and nested.is_dir():
        root = nested
    train_labels, train_pixels = [], []
    for name in _CIFAR_TRAIN_FILES:
        labels, pixels = _read_cifar_file(root / name)
        train_labels.append(labels)
        train_pixels.append(pixels)
    test_labels, test_pixels = _read_cifar_file(root / _CIFAR_TEST_FILE)
    raw_train = np.concatenate(train_pixels, axis=0)
    labels = np.concatenate(train_labels)
    return Dataset(
        Xtrain=np.ascontiguousarray(normalize_pixels(raw_train).T),
        Ttrain=_one_hot(labels, _CIFAR_CLASSES),
        Xtest=np.ascontiguousarray(normalize_pixels(test_pixels).T),
        Ttest=_one_hot(test_labels, _CIFAR_CLASSES),
        raw_train=raw_train if keep_raw else None,
        channel_mean=CIFAR10_MEAN.copy(),
        channel_std=CIFAR10_STD.copy(),
    )


def _apply_augment(images: np.ndarray, flips, offsets_y, offsets_x) -> np.ndarray:
    """Horizontal flips plus random 32x32 crops from 4-pixel zero padding.

    ``images`` is (N, 3072) in 0..255 scale (any real dtype); offsets are
    per-image ints in [0, 8]. Returns float32 (N, 3072), still raw scale.
    """
    n = images.shape[0]
    imgs = images.reshape(n, 3, 32, 32).astype(np.float32)
    out = np.empty_like(imgs)
    padded = np.zeros((3, 40, 40), dtype=np.float32)
    for i in range(n):
        img = imgs[i]
        if flips[i]:
            img = img[:, :, ::-1]
        padded[:] = 0.0
        padded[:, 4:36, 4:36] = img
        oy, ox = offsets_y[i], offsets_x[i]
        out[i] = padded[:, oy : oy + 32, ox : ox + 32]
    return out.reshape(n, 3072)


def augment_images(
    images: np.ndarray, rng: np.random.Generator, mean=CIFAR10_MEAN, std=CIFAR10_STD
) -> np.ndarray:
    """Standard CIFAR augmentation: flip w.p. 0.5, pad-4 random crop, then
    per-channel normalization. Returns (features x N) float32 columns."""
    n = images.shape[0]
    flips = rng.random(n) < 0.5
    offsets_y = rng.integers(0, 9, size=n)
    offsets_x = rng.integers(0, 9, size=n)
    augmented = _apply_augment(images, flips, offsets_y, offsets_x)
    return np.ascontiguousarray(normalize_pixels(augmented, mean, std).T)


def make_augmenter(dataset: Dataset):
    """Batch augmentation hook for sgd_train; needs raw training pixels."""
    if dataset.raw_train is None:
        raise InvalidArgumentError("dataset was loaded without raw pixels (keep_raw=False)")
    mean, std = dataset.channel_mean, dataset.channel_std

    def augment(batch_indices, rng):
        return augment_images(dataset.raw_train[batch_indices], rng, mean, std)

    return augment


def synthetic_blobs(
    n_classes: int,
    n_features: int,
    n_per_class: int,
    spread: float,
    rng,
    n_test_per_class: int | None = None,
) -> Dataset:
    """Gaussian blobs around distinct random class centers; deterministic
    under the seed, linearly separable for small spread."""
    if n_classes <= 0 or n_features <= 0 or n_per_class <= 0:
        raise InvalidArgumentError("blob sizes must be positive")
    if isinstance(rng, (int, np.integer)):
        rng = Rng(rng).stream("data")
    elif isinstance(rng, Rng):
        rng = rng.stream("data")
    if n_test_per_class is None:
        n_test_per_class = max(1, n_per_class // 5)
    centers = rng.standard_normal((n_classes, n_features))

    def draw(per_class):
        xs, labels = [], []
        for c in range(n_classes):
            noise = rng.standard_normal((per_class, n_features))
            xs.append(centers[c] + spread * noise)
            labels.append(np.full(per_class, c))
        x = np.concatenate(xs).astype(np.float32)
        y = np.concatenate(labels)
        order = rng.permutation(len(y))
        return np.ascontiguousarray(x[order].T), _one_hot(y[order], n_classes)

    xtr, ttr = draw(n_per_class)
    xte, tte = draw(n_test_per_class)
    return Dataset(Xtrain=xtr, Ttrain=ttr, Xtest=xte, Ttest=tte)


# --- NPY + model archive ------------------------------------------------

_SCHEMA_VERSION = "1.0"


def save_npy(path, arr: np.ndarray) -> None:
    if arr.dtype not in (np.float32, np.float64, np.int32):
        raise InvalidArgumentError(f"unsupported archive dtype {arr.dtype}")
    with open(path, "wb") as fh:
        np.save(fh, arr, allow_pickle=False)


def load_npy(path, expect_dtype=None, expect_shape=None) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DatasetIOError(f"missing tensor file: {path}")
    with open(path, "rb") as fh:
        magic = fh.read(6)
        if magic != b"\x93NUMPY":
            raise FormatError(f"{path}: bad NPY magic bytes")
        fh.seek(0)
        try:
            arr = np.load(fh, allow_pickle=False)
        except ValueError as exc:
            raise FormatError(f"{path}: corrupt NPY header ({exc})") from exc
    if expect_dtype is not None and arr.dtype != np.dtype(expect_dtype):
        raise FormatError(f"{path}: dtype {arr.dtype}, manifest says {expect_dtype}")
    if expect_shape is not None and arr.shape != tuple(expect_shape):
        raise FormatError(f"{path}: shape {arr.shape}, manifest says {tuple(expect_shape)}")
    return arr


def _layer_manifest_and_tensors(i, layer):
    prefix = f"layer{i:02d}"
    if isinstance(layer, SparseLinearLayer):
        files = {
            "values": f"{prefix}_values.npy",
            "col_idx": f"{prefix}_col_idx.npy",
            "row_ptr": f"{prefix}_row_ptr.npy",
            "bias": f"{prefix}_bias.npy",
        }
        entry = {
            "kind": "sparse",
            "n_in": layer.n_in,
            "n_out": layer.n_out,
            "nnz": layer.weights.nnz,
            "density": layer.density,
            "optimizer": layer.optimizer.to_dict(),
            "files": files,
        }
        tensors = {
            files["values"]: layer.weights.values,
            files["col_idx"]: layer.weights.col_idx,
            files["row_ptr"]: layer.weights.row_ptr,
            files["bias"]: layer.bias,
        }
    elif isinstance(layer, DenseLinearLayer):
        files = {"weights": f"{prefix}_weights.npy", "bias": f"{prefix}_bias.npy"}
        tensors = {files["weights"]: layer.weights, files["bias"]: layer.bias}
        if layer.mask is not None:
            from .tensor_core import csr_from_dense

            mask_csr = csr_from_dense(layer.mask)
            files["mask_col_idx"] = f"{prefix}_mask_col_idx.npy"
            files["mask_row_ptr"] = f"{prefix}_mask_row_ptr.npy"
            tensors[files["mask_col_idx"]] = mask_csr.col_idx
            tensors[files["mask_row_ptr"]] = mask_csr.row_ptr
        entry = {
            "kind": "dense",
            "n_in": layer.n_in,
            "n_out": layer.n_out,
            "density": layer.density,
            "masked": layer.mask is not None,
            "optimizer": layer.optimizer.to_dict(),
            "files": files,
        }
    elif isinstance(layer, BatchNormLayer):
        files = {
            name: f"{prefix}_{name}.npy"
            for name in ("gamma", "beta", "running_mean", "running_var")
        }
        entry = {
            "kind": "batchnorm",
            "n_features": layer.n_features,
            "eps": layer.eps,
            "stats_momentum": layer.stats_momentum,
            "optimizer": layer.optimizer.to_dict(),
            "files": files,
        }
        tensors = {
            files["gamma"]: layer.gamma,
            files["beta"]: layer.beta,
            files["running_mean"]: layer.running_mean,
            files["running_var"]: layer.running_var,
        }
    elif isinstance(layer, ActivationLayer):
        entry = {"kind": "activation", "fn": layer.fn.name, "files": {}}
        tensors = {}
    elif isinstance(layer, DropoutLayer):
        entry = {"kind": "dropout", "p": layer.p, "files": {}}
        tensors = {}
    else:
        raise InvalidArgumentError(f"cannot serialize layer {type(layer).__name__}")
    return entry, tensors


def save_model(model, dir_path) -> dict:
    """Write a compiled model to ``dir_path``: one NPY file per tensor plus
    a manifest.json. Returns the manifest dict."""
    model._require_compiled()
    out = Path(dir_path)
    out.mkdir(parents=True, exist_ok=True)
    layers = []
    for i, layer in enumerate(model.layers):
        entry, tensors = _layer_manifest_and_tensors(i, layer)
        for name, arr in tensors.items():
            save_npy(out / name, arr)
        layers.append(entry)
    manifest = {
        "schema_version": _SCHEMA_VERSION,
        "library_version": _library_version,
        "input_size": model.input_size,
        "batch_size": model.batch_size,
        "dtype": model.dtype.name,
        "layers": layers,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest


def load_model(dir_path, seed: int = 0) -> Sequential:
    """Rebuild a model from an archive; parameters reload bit-identically."""
    root = Path(dir_path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise DatasetIOError(f"missing manifest: {manifest_path}")
    with open(manifest_path) as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{manifest_path}: invalid JSON ({exc})") from exc
    version = str(manifest.get("schema_version", ""))
    if version.split(".")[0] != _SCHEMA_VERSION.split(".")[0]:
        raise FormatError(f"unsupported archive schema version {version!r}")
    dtype = np.dtype(manifest["dtype"])

    model = Sequential()
    model.rng = Rng(seed)
    dropout_rng = model.rng.stream("dropout")
    for entry in manifest["layers"]:
        kind = entry["kind"]
        files = entry.get("files", {})
        if kind == "sparse":
            n_in, n_out, nnz = entry["n_in"], entry["n_out"], entry["nnz"]
            values = load_npy(root / files["values"], dtype, (nnz,))
            col_idx = load_npy(root / files["col_idx"], np.int32, (nnz,))
            row_ptr = load_npy(root / files["row_ptr"], np.int32, (n_out + 1,))
            bias = load_npy(root / files["bias"], dtype, (n_out,))
            try:
                pattern = SparsityPattern(n_out, n_in, row_ptr, col_idx)
            except InvalidArgumentError as exc:
                raise FormatError(f"invalid CSR structure in archive: {exc}") from exc
            layer = SparseLinearLayer(pattern, values, bias, optimizer_from_dict(entry["optimizer"]))
        elif kind == "dense":
            n_in, n_out = entry["n_in"], entry["n_out"]
            weights = load_npy(root / files["weights"], dtype, (n_out, n_in))
            bias = load_npy(root / files["bias"], dtype, (n_out,))
            mask = None
            if entry.get("masked"):
                col_idx = load_npy(root / files["mask_col_idx"], np.int32)
                row_ptr = load_npy(root / files["mask_row_ptr"], np.int32, (n_out + 1,))
                try:
                    mask = SparsityPattern(n_out, n_in, row_ptr, col_idx).dense_mask(dtype)
                except InvalidArgumentError as exc:
                    raise FormatError(f"invalid mask structure in archive: {exc}") from exc
            layer = DenseLinearLayer(weights, bias, optimizer_from_dict(entry["optimizer"]), mask=mask)
        elif kind == "batchnorm":
            n = entry["n_features"]
            layer = BatchNormLayer(
                n,
                eps=entry["eps"],
                stats_momentum=entry["stats_momentum"],
                optimizer=optimizer_from_dict(entry["optimizer"]),
                dtype=dtype,
            )
            layer.gamma = load_npy(root / files["gamma"], dtype, (n,))
            layer.beta = load_npy(root / files["beta"], dtype, (n,))
            layer.running_mean = load_npy(root / files["running_mean"], dtype, (n,))
            layer.running_var = load_npy(root / files["running_var"], dtype, (n,))
        elif kind == "activation":
            layer = ActivationLayer(activation_from_name(entry["fn"]))
        elif kind == "dropout":
            layer = DropoutLayer(entry["p"], rng=dropout_rng)
        else:
            raise FormatError(f"unknown layer kind {kind!r} in manifest")
        model.layers.append(layer)

    model.input_size = manifest["input_size"]
    model.batch_size = manifest["batch_size"]
    model.dtype = dtype
    sizes = [l.n_out for l in model.layers if isinstance(l, (SparseLinearLayer, DenseLinearLayer))]
    model.output_size = sizes[-1] if sizes else model.input_size
    model.compiled = True
    return model


@dataclass
class SizeReport:
    """Bytes needed to store the model's tensors (no file headers).

    ``weight_bytes`` covers weight storage only: dense W, or sparse
    values + col_idx + row_ptr. Biases and batch-norm vectors are itemized
    separately so both accounting conventions are available.
    """

    layers: list[dict]
    weight_bytes: int
    bias_bytes: int
    other_bytes: int

    @property
    def total_bytes(self) -> int:
        return self.weight_bytes + self.bias_bytes + self.other_bytes

    def to_dict(self):
        return {
            "layers": self.layers,
            "weight_bytes": self.weight_bytes,
            "bias_bytes": self.bias_bytes,
            "other_bytes": self.other_bytes,
            "total_bytes": self.total_bytes,
        }


def model_size_report(model) -> SizeReport:
    model._require_compiled()
    layers = []
    weight_total = bias_total = other_total = 0
    for i, layer in enumerate(model.layers):
        if isinstance(layer, SparseLinearLayer):
            item = layer.weights.values.itemsize
            w = item * layer.weights.nnz + 4 * layer.weights.nnz + 4 * (layer.n_out + 1)
            b = layer.bias.itemsize * layer.n_out
            layers.append(
                {"index": i, "kind": "sparse", "nnz": layer.weights.nnz,
                 "weight_bytes": w, "bias_bytes": b}
            )
            weight_total += w
            bias_total += b
        elif isinstance(layer, DenseLinearLayer):
            w = layer.weights.itemsize * layer.n_in * layer.n_out
            b = layer.bias.itemsize * layer.n_out
            layers.append(
                {"index": i, "kind": "dense", "nnz": layer.n_in * layer.n_out,
                 "weight_bytes": w, "bias_bytes": b}
            )
            weight_total += w
            bias_total += b
        elif isinstance(layer, BatchNormLayer):
            o = 4 * layer.n_features * layer.gamma.itemsize
            layers.append({"index": i, "kind": "batchnorm", "other_bytes": o})
            other_total += o
    return SizeReport(
        layers=layers, weight_bytes=weight_total, bias_bytes=bias_total, other_bytes=other_total
    )


def archive_weight_file_bytes(dir_path) -> int:
    """Sum of on-disk sizes of the weight tensor files in an archive
    (values/col_idx/row_ptr for sparse layers, weights for dense ones)."""
    root = Path(dir_path)
    with open(root / "manifest.json") as fh:
        manifest = json.load(fh)
    total = 0
    for entry in manifest["layers"]:
        for key, fname in entry.get("files", {}).items():
            if key in ("values", "col_idx", "row_ptr", "weights"):
                total += os.path.getsize(root / fname)
    return total
