"""Age and frequency bookkeeping at the parameter server.

Age vectors are int64 arrays, one per cluster: entry ``j`` counts global
rounds since coordinate ``j`` was last refreshed by any member of the cluster.
Frequency vectors are int64 arrays, one per client, counting how often each
coordinate was requested from that client.
"""

from __future__ import annotations

import struct

import numpy as np

from .vectors import StructuralError

_COUNTS_HEADER = struct.Struct("<Q")


def _index_array(requested, d):
    idx = np.fromiter((int(i) for i in requested), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= d):
        raise StructuralError(f"requested index out of range for dimension {d}")
    return idx


def age_update(ages, requested) -> np.ndarray:
    """Increment every age by one, then zero the requested coordinates."""
    ages = np.asarray(ages, dtype=np.int64)
    idx = _index_array(requested, ages.size)
    out = ages + 1
    out[idx] = 0
    return out


def record_request(counts, requested) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.int64)
    idx = _index_array(requested, counts.size)
    if np.unique(idx).size != idx.size:
        raise StructuralError("requested set contains duplicates")
    out = counts.copy()
    out[idx] += 1
    return out


def merge_age_vectors(into, other) -> np.ndarray:
    """Coordinate-wise minimum: the merged cluster is as fresh as its freshest member."""
    into = np.asarray(into, dtype=np.int64)
    other = np.asarray(other, dtype=np.int64)
    if into.shape != other.shape:
        raise StructuralError(f"cannot merge age vectors of shapes {into.shape} and {other.shape}")
    return np.minimum(into, other)


def rank_by_age(candidates, ages, magnitudes) -> np.ndarray:
    """Order ``candidates`` oldest first.

    Ties in age go to the larger magnitude, then to the lower index.
    ``magnitudes`` is aligned with ``candidates``.
    """
    cand = np.asarray(candidates, dtype=np.int64)
    mag = np.abs(np.asarray(magnitudes, dtype=np.float64))
    order = np.lexsort((cand, -mag, -np.asarray(ages)[cand]))
    return cand[order]


def assign_disjoint_requests(ages, candidate_sets, k, magnitudes=None):
    """Greedy disjoint assignment of requested indices within one cluster.

    Clients are served in the given order (ascending client id). Each takes its
    ``k`` oldest candidates not already taken by an earlier client; when fewer
    remain, it takes all that remain.

    Parameters
    ----------
    ages : array of int
        The cluster's age vector.
    candidate_sets : list of int arrays
        Each client's reported top-r indices.
    k : int or list of int
        Request budget, shared or per client.
    magnitudes : list of float arrays, optional
        Reported |g| aligned with each candidate set, used for tie-breaks.

    Returns
    -------
    list of sorted int64 arrays, pairwise disjoint.
    """
    ages = np.asarray(ages, dtype=np.int64)
    n = len(candidate_sets)
    budgets = [int(k)] * n if np.isscalar(k) else [int(b) for b in k]
    if len(budgets) != n:
        raise StructuralError("one budget per client is required")
    if magnitudes is None:
        magnitudes = [np.zeros(len(c)) for c in candidate_sets]

    taken = np.zeros(ages.size, dtype=bool)
    out = []
    for cand, mag, budget in zip(candidate_sets, magnitudes, budgets):
        cand = _index_array(cand, ages.size)
        mag = np.asarray(mag, dtype=np.float64)
        if mag.shape != cand.shape:
            raise StructuralError("magnitudes must align with candidates")
        free = ~taken[cand]
        chosen = rank_by_age(cand[free], ages, mag[free])[:budget]
        taken[chosen] = True
        out.append(np.sort(chosen))
    return out


def write_counts(fh, counts):
    """Write an integer vector as ``<u64 dim>`` followed by little-endian int64 data."""
    arr = np.ascontiguousarray(counts, dtype="<i8")
    fh.write(_COUNTS_HEADER.pack(arr.size))
    fh.write(arr.tobytes())


def read_counts(fh) -> np.ndarray:
    head = fh.read(_COUNTS_HEADER.size)
    if len(head) != _COUNTS_HEADER.size:
        raise StructuralError("truncated counts header")
    (d,) = _COUNTS_HEADER.unpack(head)
    raw = fh.read(8 * d)
    if len(raw) != 8 * d:
        raise StructuralError(f"truncated counts body: expected {8 * d} bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype="<i8").astype(np.int64)
