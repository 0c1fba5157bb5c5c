"""Image datasets: IDX loading, class filtering, subsampling and synthetic blobs."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BoundsError, ConsistencyError, ContractError, EmptyDatasetError, FormatError
from .rng import derive_rng

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049


@dataclass(frozen=True)
class Dataset:
    """N images flattened to rows of D pixels in [0, 1], with integer labels."""

    images: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    indices: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        images = np.array(self.images, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        if images.ndim != 2:
            raise ContractError(f"images must be an N x D matrix, got shape {images.shape}")
        if labels.shape != (images.shape[0],):
            raise ConsistencyError(f"{images.shape[0]} images but {labels.size} labels")
        if not np.isfinite(images).all() or images.min(initial=0.0) < 0 or images.max(initial=0.0) > 1:
            raise ContractError("pixel values must lie in [0, 1]")
        if labels.size and labels.min() < 0:
            raise ContractError("labels must be non-negative")
        indices = np.arange(len(labels)) if self.indices is None else np.asarray(self.indices, dtype=np.int64)
        images.setflags(write=False)
        labels.setflags(write=False)
        indices.setflags(write=False)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "indices", indices)

    def __len__(self):
        return self.images.shape[0]

    @property
    def dim(self):
        return self.images.shape[1]

    def take(self, rows, name=None):
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.images[rows], self.labels[rows], name or self.name, self.indices[rows])


def _read_header(path, magic, n_dims):
    with open(path, "rb") as fh:
        head = fh.read(4 + 4 * n_dims)
        payload = fh.read()
    if len(head) < 4 or struct.unpack(">I", head[:4])[0] != magic:
        raise FormatError(
            f"{path}: bad magic bytes {head[:4].hex(' ')} (expected {struct.pack('>I', magic).hex(' ')})"
        )
    if len(head) != 4 + 4 * n_dims:
        raise FormatError(f"{path}: truncated header")
    dims = struct.unpack(f">{n_dims}I", head[4:])
    expected = int(np.prod(dims))
    if len(payload) != expected:
        raise FormatError(f"{path}: expected {expected} payload bytes, found {len(payload)}")
    return dims, np.frombuffer(payload, dtype=np.uint8)


def load_idx(images_path, labels_path, name=None):
    """Read an IDX image file (magic 2051) and label file (magic 2049)."""
    (n, rows, cols), pixels = _read_header(images_path, IMAGE_MAGIC, 3)
    (n_labels,), labels = _read_header(labels_path, LABEL_MAGIC, 1)
    if n != n_labels:
        raise ConsistencyError(f"{images_path} has {n} images but {labels_path} has {n_labels} labels")
    images = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    return Dataset(images, labels, name or Path(images_path).parent.name)


def filter_classes(ds, classes):
    classes = set(int(c) for c in classes)
    if not classes:
        raise ContractError("filter_classes needs at least one class")
    rows = np.flatnonzero(np.isin(ds.labels, sorted(classes)))
    if rows.size == 0:
        raise EmptyDatasetError(f"no rows of {ds.name} have labels in {sorted(classes)}")
    return ds.take(rows)


def subsample(ds, n, seed):
    """Draw `n` rows without replacement, deterministically in `seed`."""
    if not 0 < n <= len(ds):
        raise BoundsError(f"cannot draw {n} rows from a dataset of {len(ds)}")
    rows = derive_rng(seed, "subsample").choice(len(ds), size=n, replace=False)
    return ds.take(rows)


def synthetic_clusters(k, per_cluster, dim, spread, seed):
    """Isotropic Gaussian blobs whose centers sit on the unit circle.

    Centers occupy the first two coordinates (zero elsewhere). Points are
    mapped from [-1, 1] to [0, 1] by ``(x + 1) / 2`` and clamped.
    """
    if k < 1 or per_cluster < 1:
        raise ContractError("k and per_cluster must be at least 1")
    if dim < 2:
        raise ContractError("synthetic clusters need dim >= 2")
    if spread <= 0:
        raise ContractError("spread must be positive")
    angles = 2.0 * np.pi * np.arange(k) / k
    centers = np.zeros((k, dim))
    centers[:, 0] = np.cos(angles)
    centers[:, 1] = np.sin(angles)
    rng = derive_rng(seed, "synthetic")
    points = np.repeat(centers, per_cluster, axis=0) + spread * rng.standard_normal((k * per_cluster, dim))
    images = np.clip((points + 1.0) / 2.0, 0.0, 1.0)
    labels = np.repeat(np.arange(k), per_cluster)
    return Dataset(images, labels, f"synthetic-{k}")


def _split(ds, fraction, seed):
    order = derive_rng(seed, "split").permutation(len(ds))
    n_test = max(1, int(round(fraction * len(ds))))
    return ds.take(np.sort(order[n_test:])), ds.take(np.sort(order[:n_test]), name=f"{ds.name}-test")


def datasets_from_config(block):
    """(train, test) datasets described by a materialized ``dataset`` config block."""
    classes = block.get("classes")
    if "synthetic" in block:
        s = block["synthetic"]
        train = synthetic_clusters(s["k"], s["per_cluster"], s["dim"], s["spread"], s["seed"])
        n_test = max(1, int(round(block.get("test_fraction", 0.2) * s["per_cluster"])))
        test = synthetic_clusters(s["k"], n_test, s["dim"], s["spread"], [s["seed"], "test"])
    else:
        src = block["source"]
        train = load_idx(src["images"], src["labels"])
        test = None
        if "test" in block:
            test = load_idx(block["test"]["images"], block["test"]["labels"])
    if classes is not None:
        train = filter_classes(train, classes)
        if test is not None:
            test = filter_classes(test, classes)
    if test is None:
        train, test = _split(train, block.get("test_fraction", 0.2), block.get("subsample_seed", 0))
    if block.get("subsample"):
        train = subsample(train, min(block["subsample"], len(train)), block.get("subsample_seed", 0))
    return train, test
