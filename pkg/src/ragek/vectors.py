"""Dense and sparse gradient vectors.

Dense vectors are plain float64 numpy arrays. A :class:`SparseUpdate` is the
on-wire payload a client sends to the parameter server: the coordinates it was
asked for, and the values it holds there.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class StructuralError(ValueError):
    """Raised when a vector or update has the wrong shape or bad indices."""


@dataclass(frozen=True)
class SparseUpdate:
    dim: int
    indices: np.ndarray
    values: np.ndarray
    requested: frozenset = field(default=None)

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        val = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.dim < 1:
            raise StructuralError(f"dim must be positive, got {self.dim}")
        if idx.shape != val.shape:
            raise StructuralError("indices and values differ in length")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise StructuralError(f"index out of range for dim {self.dim}")
            if np.any(np.diff(idx) <= 0):
                raise StructuralError("indices must be strictly increasing")
        requested = self.requested
        if requested is None:
            requested = frozenset(int(i) for i in idx)
        else:
            requested = frozenset(int(i) for i in requested)
            if not requested.issuperset(int(i) for i in idx):
                raise StructuralError("update carries indices that were not requested")
        idx.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)
        object.__setattr__(self, "requested", requested)

    @classmethod
    def from_pairs(cls, dim, pairs, requested=None):
        pairs = list(pairs)
        idx = [int(i) for i, _ in pairs]
        val = [float(v) for _, v in pairs]
        return cls(dim, np.array(idx, dtype=np.int64), np.array(val), requested)

    def __len__(self):
        return int(self.indices.size)

    def pairs(self):
        return list(zip(self.indices.tolist(), self.values.tolist()))


def restrict(g, support) -> SparseUpdate:
    """Sparse restriction of dense ``g`` to the index set ``support``."""
    g = np.asarray(g, dtype=np.float64)
    idx = np.unique(np.fromiter(support, dtype=np.int64))
    return SparseUpdate(g.size, idx, g[idx])


def densify(u: SparseUpdate) -> np.ndarray:
    out = np.zeros(u.dim, dtype=np.float64)
    out[u.indices] = u.values
    return out


def aggregate(updates, dim: int) -> np.ndarray:
    """Sum the densified updates, folding in list order.

    Callers pass updates in ascending client order; the fold order is fixed so
    that the result is bit-reproducible.
    """
    total = np.zeros(dim, dtype=np.float64)
    for u in updates:
        if u.dim != dim:
            raise StructuralError(f"update dim {u.dim} does not match {dim}")
        total[u.indices] += u.values
    return total
