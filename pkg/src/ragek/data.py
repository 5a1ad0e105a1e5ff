"""Non-i.i.d. client data: synthetic mixtures, label sharding, IDX files, batching."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass

import numpy as np


class FormatError(ValueError):
    def __init__(self, msg, offset):
        super().__init__(f"{msg} (at byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class ClientDataset:
    features: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return int(self.labels.size)

    @property
    def classes(self):
        return frozenset(np.unique(self.labels).tolist())


@dataclass(frozen=True)
class ShardPlan:
    """Which class labels each client holds. Clients may share classes."""

    class_assignment: tuple

    def __post_init__(self):
        plan = tuple(tuple(sorted(set(int(c) for c in cls))) for cls in self.class_assignment)
        if any(not cls for cls in plan):
            raise ValueError("every client needs at least one class")
        object.__setattr__(self, "class_assignment", plan)

    @property
    def num_clients(self):
        return len(self.class_assignment)

    def ground_truth(self):
        """Clients grouped by identical class sets, as sorted tuples."""
        groups = {}
        for client, cls in enumerate(self.class_assignment):
            groups.setdefault(cls, []).append(client)
        return sorted(tuple(g) for g in groups.values())


def mnist_pairs_plan():
    """Ten clients in five pairs: {0,1}, {2,3}, ..., {8,9}."""
    return ShardPlan(tuple((2 * (i // 2), 2 * (i // 2) + 1) for i in range(10)))


def cifar_groups_plan():
    """Six clients in three pairs over classes {0,1,2}, {3,4,5}, {6,7,8,9}."""
    groups = [(0, 1, 2), (3, 4, 5), (6, 7, 8, 9)]
    return ShardPlan(tuple(groups[i // 2] for i in range(6)))


def minmax_scale(X):
    """Scale every column into [0, 1]; constant columns map to 0."""
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    span[span == 0] = 1.0
    return (X - lo) / span


def synth_generate(num_classes, input_dim, per_class_count, separation, seed):
    """Gaussian mixture with unit-variance classes around ``separation``-scaled means.

    Returns ``(features, labels)`` with features min-max scaled into [0, 1].
    """
    if separation < 0:
        raise ValueError("separation must be non-negative")
    rng = np.random.default_rng(seed)
    means = separation * rng.standard_normal((num_classes, input_dim))
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), per_class_count)
    X = means[labels] + rng.standard_normal((labels.size, input_dim))
    return minmax_scale(X), labels


def shard(features, labels, plan: ShardPlan, seed, overlap=False):
    """Split a labelled dataset across clients according to ``plan``.

    Each class's samples are shuffled and divided evenly among the clients
    holding that class. With ``overlap=True`` every holder gets all of them.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    present = set(np.unique(labels).tolist())
    holders = {}
    for client, cls in enumerate(plan.class_assignment):
        for c in cls:
            if c not in present:
                raise ValueError(f"class {c} assigned to client {client} is absent from the data")
            holders.setdefault(c, []).append(client)

    rng = np.random.default_rng(seed)
    parts = [[] for _ in range(plan.num_clients)]
    for c in sorted(holders):
        idx = rng.permutation(np.flatnonzero(labels == c))
        owners = holders[c]
        if overlap:
            for client in owners:
                parts[client].append(idx)
        else:
            for client, chunk in zip(owners, np.array_split(idx, len(owners))):
                parts[client].append(chunk)
    out = []
    for chunks in parts:
        sel = np.sort(np.concatenate(chunks))
        out.append(ClientDataset(features[sel], labels[sel]))
    return out


class Batcher:
    """Epoch-wise shuffled minibatches drawn from one client's data."""

    def __init__(self, dataset: ClientDataset, batch_size, rng):
        if len(dataset) == 0:
            raise ValueError("cannot batch an empty dataset")
        self.dataset = dataset
        self.batch_size = batch_size
        self.rng = rng
        self._perm = None
        self._pos = 0

    def next_batch(self):
        n = len(self.dataset)
        if self._perm is None or self._pos >= n:
            self._perm = self.rng.permutation(n)
            self._pos = 0
        sel = self._perm[self._pos:self._pos + self.batch_size]
        self._pos += sel.size
        return self.dataset.features[sel], self.dataset.labels[sel]


# IDX type byte -> big-endian numpy dtype
_IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_IDX_CODES = {dt.kind + str(dt.itemsize): code for code, dt in _IDX_TYPES.items()}


def _open(path, mode):
    return gzip.open(path, mode) if str(path).endswith(".gz") else open(path, mode)


def parse_idx(buf, normalize=True):
    """Decode IDX bytes.

    Rank-1 payloads (labels) come back as int64. Higher-rank unsigned-byte
    payloads (images) are divided by 255 when ``normalize`` is set.
    """
    if len(buf) < 4:
        raise FormatError("truncated magic number", len(buf))
    if buf[0] != 0 or buf[1] != 0:
        raise FormatError("bad magic: first two bytes must be zero", 0 if buf[0] else 1)
    code, rank = buf[2], buf[3]
    if code not in _IDX_TYPES:
        raise FormatError(f"unknown element type 0x{code:02x}", 2)
    if rank == 0:
        raise FormatError("rank must be at least 1", 3)
    head = 4 + 4 * rank
    if len(buf) < head:
        raise FormatError("truncated dimension header", len(buf))
    dims = struct.unpack(f">{rank}I", buf[4:head])
    dtype = _IDX_TYPES[code]
    need = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(buf) - head < need:
        raise FormatError(f"truncated data: expected {need} bytes", len(buf))
    arr = np.frombuffer(buf, dtype=dtype, count=need // dtype.itemsize, offset=head).reshape(dims)
    if rank == 1 and dtype.kind in "iu":
        return arr.astype(np.int64)
    if normalize and code == 0x08:
        return arr.astype(np.float64) / 255.0
    return arr.astype(dtype.newbyteorder("="))


def read_idx(path, normalize=True):
    with _open(path, "rb") as fh:
        return parse_idx(fh.read(), normalize=normalize)


def idx_header(path):
    """Return ``(magic, dims)`` without decoding the payload."""
    with _open(path, "rb") as fh:
        head = fh.read(4)
        if len(head) < 4:
            raise FormatError("truncated magic number", len(head))
        rank = head[3]
        dims = fh.read(4 * rank)
        if len(dims) < 4 * rank:
            raise FormatError("truncated dimension header", 4 + len(dims))
    return struct.unpack(">I", head)[0], struct.unpack(f">{rank}I", dims)


def write_idx(path, array):
    arr = np.asarray(array)
    key = arr.dtype.kind + str(arr.dtype.itemsize)
    if key not in _IDX_CODES:
        raise ValueError(f"dtype {arr.dtype} has no IDX encoding")
    code = _IDX_CODES[key]
    with _open(path, "wb") as fh:
        fh.write(bytes([0, 0, code, arr.ndim]))
        fh.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        fh.write(arr.astype(_IDX_TYPES[code]).tobytes())


def load_mnist(images_path, labels_path):
    """Flattened [0, 1] images and integer labels from a pair of IDX files."""
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise ValueError("image and label counts differ")
    return images.reshape(images.shape[0], -1), labels
