"""Datasets, client shards, heterogeneous partitioners and the IDX reader."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_count, check_positive
from .rng import Purpose, RngStream

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


class BadMagicError(IdxFormatError):
    pass


class TruncatedFileError(IdxFormatError):
    pass


class EmptyShardError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int = field(init=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels)
        if X.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {X.shape}")
        if X.shape[0] < 1:
            raise ValueError("a dataset needs at least one sample")
        if y.shape != (X.shape[0],):
            raise ValueError(f"labels shape {y.shape} does not match {X.shape[0]} samples")
        if not np.all(np.isfinite(X)):
            raise ValueError("feature rows must be finite")
        X.setflags(write=False)
        y = y.copy()
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        n_classes = int(y.max()) + 1 if np.issubdtype(y.dtype, np.integer) else 0
        object.__setattr__(self, "n_classes", n_classes)

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(self.features[idx], self.labels[idx])


@dataclass(frozen=True)
class ClientShard:
    owner: int
    sample_indices: np.ndarray

    def __len__(self):
        return len(self.sample_indices)


def check_disjoint_cover(shards: list[ClientShard], n_samples: int) -> bool:
    """True when the shards partition ``range(n_samples)`` exactly."""
    if not shards:
        return n_samples == 0
    allidx = np.concatenate([s.sample_indices for s in shards])
    if allidx.size != n_samples:
        return False
    return bool(np.array_equal(np.sort(allidx), np.arange(n_samples)))


def partition_sorted_by_label(ds: Dataset, n: int) -> list[ClientShard]:
    """Sort samples by label and cut them into ``n`` contiguous slices.

    Slices are ``N // n`` long and the remainder goes to the last client, so
    each client sees only a few classes.
    """
    n = check_count(n, "n")
    N = len(ds)
    if n > N:
        raise ValueError(f"cannot split {N} samples among {n} clients")
    # stable argsort == sort keyed by (label, original index)
    order = np.argsort(ds.labels, kind="stable")
    size = N // n
    shards = []
    for i in range(n):
        stop = N if i == n - 1 else (i + 1) * size
        shards.append(ClientShard(i, order[i * size:stop].copy()))
    return shards


def _largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    raw = weights * total
    counts = np.floor(raw).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        # ties broken by client index via the stable sort
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def partition_dirichlet(ds: Dataset, n: int, alpha: float, rng: RngStream | int) -> list[ClientShard]:
    """Label-skewed split: class ``c`` is divided by a ``Dirichlet(alpha 1_n)`` draw.

    Small ``alpha`` concentrates each class on few clients. Empty shards are
    allowed; see :func:`empty_shards`.
    """
    n = check_count(n, "n")
    alpha = check_positive(alpha, "alpha")
    if isinstance(rng, int):
        rng = RngStream(rng, purpose=Purpose.PARTITION)
    gen = rng.generator()
    buckets: list[list[np.ndarray]] = [[] for _ in range(n)]
    for c in np.unique(ds.labels):
        members = np.flatnonzero(ds.labels == c)
        members = members[gen.permutation(members.size)]
        props = gen.dirichlet(np.full(n, alpha))
        if not np.all(np.isfinite(props)) or props.sum() <= 0:
            props = np.full(n, 1.0 / n)
        counts = _largest_remainder(props / props.sum(), members.size)
        start = 0
        for i, k in enumerate(counts):
            buckets[i].append(members[start:start + k])
            start += k
    return [
        ClientShard(i, np.sort(np.concatenate(b)) if b else np.empty(0, dtype=np.intp))
        for i, b in enumerate(buckets)
    ]


def empty_shards(shards: list[ClientShard]) -> list[int]:
    return [s.owner for s in shards if len(s) == 0]


def partition_iid(ds: Dataset, n: int, rng: RngStream | int) -> list[ClientShard]:
    """Uniformly shuffled, equal-size split (remainder to the last client)."""
    n = check_count(n, "n")
    if n > len(ds):
        raise ValueError(f"cannot split {len(ds)} samples among {n} clients")
    if isinstance(rng, int):
        rng = RngStream(rng, purpose=Purpose.PARTITION)
    order = rng.generator().permutation(len(ds))
    size = len(ds) // n
    return [
        ClientShard(i, np.sort(order[i * size:(len(ds) if i == n - 1 else (i + 1) * size)]))
        for i in range(n)
    ]


# -- IDX files -------------------------------------------------------------

def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def read_idx(path) -> np.ndarray:
    """Parse an unsigned-byte IDX file (images ``0x803`` or labels ``0x801``)."""
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise TruncatedFileError(f"{path}: file too short for an IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic == IMAGE_MAGIC:
        ndim = 3
    elif magic == LABEL_MAGIC:
        ndim = 1
    else:
        raise BadMagicError(f"{path}: bad IDX magic 0x{magic:08X}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedFileError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims))
    if len(raw) - header < size:
        raise TruncatedFileError(f"{path}: expected {size} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def load_idx(images_path, labels_path=None, limit: int | None = None) -> Dataset:
    """Load IDX images (flattened, scaled to [0, 1]) and optional labels.

    Gzip-compressed files are detected and decompressed transparently. Without
    ``labels_path`` every sample gets label 0.
    """
    images = read_idx(images_path)
    if images.ndim != 3:
        raise BadMagicError(f"{images_path}: expected an image file (magic 0x00000803)")
    X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    if labels_path is None:
        y = np.zeros(X.shape[0], dtype=np.int64)
    else:
        y = read_idx(labels_path).astype(np.int64)
        if y.ndim != 1:
            raise BadMagicError(f"{labels_path}: expected a label file (magic 0x00000801)")
        if y.shape[0] != X.shape[0]:
            raise IdxFormatError(f"{y.shape[0]} labels for {X.shape[0]} images")
    if limit is not None:
        X, y = X[:limit], y[:limit]
    return Dataset(X, y)


def write_idx(path, array: np.ndarray) -> None:
    """Write an unsigned-byte array as an uncompressed IDX file (1-D or 3-D)."""
    arr = np.asarray(array, dtype=np.uint8)
    if arr.ndim == 3:
        magic = IMAGE_MAGIC
    elif arr.ndim == 1:
        magic = LABEL_MAGIC
    else:
        raise ValueError("IDX writer supports 1-D labels or 3-D images")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())
