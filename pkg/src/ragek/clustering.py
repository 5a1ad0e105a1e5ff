"""Client clustering from request-frequency vectors.

Clients whose requested coordinates overlap heavily are likely to hold data
from the same distribution. Pairwise overlap is scored, turned into a
distance, and clustered with DBSCAN. Each resulting cluster gets one age
vector; :func:`recluster` decides which age vectors survive a partition
change and which are reset.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .aging import merge_age_vectors
from .vectors import StructuralError

NOISE = -1


class DegenerateFrequencyError(ValueError):
    pass


def similarity(f1, f2) -> float:
    """<f1, f2> / <f1, f1>. Not symmetric."""
    f1 = np.asarray(f1, dtype=np.int64)
    f2 = np.asarray(f2, dtype=np.int64)
    if f1.shape != f2.shape:
        raise StructuralError("frequency vectors differ in dimension")
    denom = int(np.dot(f1, f1))
    if denom == 0:
        raise DegenerateFrequencyError("first frequency vector is all zeros")
    return int(np.dot(f1, f2)) / denom


def similarity_matrix(freqs) -> np.ndarray:
    """Row-normalized Gram matrix; rows of all-zero clients are zero."""
    F = np.asarray(freqs, dtype=np.int64)
    # exact integer inner products before the single division
    gram = F @ F.T
    self_ip = np.diag(gram).astype(np.float64)
    S = np.zeros(gram.shape, dtype=np.float64)
    live = self_ip > 0
    S[live] = gram[live] / self_ip[live, None]
    return S


def similarity_to_distance(S) -> np.ndarray:
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise StructuralError("similarity matrix must be square")
    dist = 1.0 - np.minimum(1.0, np.minimum(S, S.T))
    np.fill_diagonal(dist, 0.0)
    return dist


def _check_distance(dist):
    dist = np.asarray(dist, dtype=np.float64)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise StructuralError("distance matrix must be square")
    if not np.all(np.isfinite(dist)):
        raise StructuralError("distance matrix has non-finite entries")
    if not np.array_equal(dist, dist.T):
        raise StructuralError("distance matrix is not symmetric")
    if np.any(np.diag(dist) != 0):
        raise StructuralError("distance matrix diagonal must be zero")
    return dist


def dbscan(dist, eps, min_pts) -> np.ndarray:
    """DBSCAN on a precomputed distance matrix.

    A point is core when at least ``min_pts`` points (itself included) lie
    within ``eps``. Points are scanned in ascending index order and each
    cluster is expanded breadth-first, so a border point joins the first
    cluster that reaches it.

    Returns an int array of labels, ``NOISE`` (-1) for noise, clusters
    numbered 0, 1, ... in discovery order.
    """
    dist = _check_distance(dist)
    if eps <= 0 or min_pts < 1:
        raise ValueError("eps must be positive and min_pts at least 1")
    n = dist.shape[0]
    neighbours = [np.flatnonzero(dist[i] <= eps) for i in range(n)]
    core = np.array([nb.size >= min_pts for nb in neighbours], dtype=bool)
    labels = np.full(n, NOISE, dtype=np.int64)
    next_label = 0
    for i in range(n):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = next_label
        queue = deque([i])
        while queue:
            p = queue.popleft()
            if not core[p]:
                continue
            for q in neighbours[p]:
                if labels[q] == NOISE:
                    labels[q] = next_label
                    queue.append(q)
        next_label += 1
    return labels


def labels_to_groups(labels):
    """Split DBSCAN labels into (clusters as sorted tuples, noise tuple)."""
    labels = np.asarray(labels)
    groups = [tuple(np.flatnonzero(labels == c).tolist()) for c in range(labels.max(initial=-1) + 1)]
    noise = tuple(np.flatnonzero(labels == NOISE).tolist())
    return [g for g in groups if g], noise


@dataclass
class ClusterState:
    """Partition of clients into clusters, each holding one age vector.

    Clusters are keyed by their smallest member id, which makes labels
    canonical and deterministic.
    """

    members: dict = field(default_factory=dict)
    ages: dict = field(default_factory=dict)

    @classmethod
    def singletons(cls, num_clients, d):
        return cls(
            members={i: (i,) for i in range(num_clients)},
            ages={i: np.zeros(d, dtype=np.int64) for i in range(num_clients)},
        )

    @property
    def num_clients(self):
        return sum(len(m) for m in self.members.values())

    def cluster_of(self, client):
        for cid, mem in self.members.items():
            if client in mem:
                return cid
        raise KeyError(client)

    def labels(self) -> np.ndarray:
        out = np.empty(self.num_clients, dtype=np.int64)
        for cid, mem in self.members.items():
            out[list(mem)] = cid
        return out

    def copy(self):
        return ClusterState(dict(self.members), {c: a.copy() for c, a in self.ages.items()})


def _successor(old_members, new_groups_of):
    # the new group keeping the largest share of an old cluster continues it;
    # ties go to the group holding the old cluster's lowest id
    best, best_key = None, None
    for c in old_members:
        grp = new_groups_of[c]
        share = sum(1 for m in old_members if m in grp)
        key = (-share, min(m for m in old_members if m in grp))
        if best_key is None or key < best_key:
            best, best_key = grp, key
    return best


def repartition(state: ClusterState, groups) -> ClusterState:
    """Install a new partition, carrying over or resetting age vectors.

    ``groups`` is a list of member tuples covering every client once (noise
    clients appear as singletons). A client keeps its old cluster's age
    vector only if its new group is the successor of its old cluster and
    contains no outsiders; otherwise its identity changed and it contributes
    an all-zero vector. The new group's vector is the coordinate-wise min of
    its members' contributions.
    """
    new_groups_of = {}
    for grp in groups:
        grp = tuple(sorted(grp))
        for c in grp:
            if c in new_groups_of:
                raise StructuralError(f"client {c} assigned to two clusters")
            new_groups_of[c] = grp
    if len(new_groups_of) != state.num_clients:
        raise StructuralError("partition does not cover every client")

    d = next(iter(state.ages.values())).size
    successors = {cid: _successor(mem, new_groups_of) for cid, mem in state.members.items()}
    members, ages = {}, {}
    for grp in sorted(set(new_groups_of.values())):
        vec = None
        for c in grp:
            old = state.cluster_of(c)
            old_mem = set(state.members[old])
            if successors[old] == grp and set(grp) <= old_mem:
                contrib = state.ages[old]
            else:
                contrib = np.zeros(d, dtype=np.int64)
            vec = contrib.copy() if vec is None else merge_age_vectors(vec, contrib)
        members[grp[0]] = grp
        ages[grp[0]] = vec
    return ClusterState(members, ages)


def recluster(state: ClusterState, freqs, eps, min_pts):
    """Cluster clients by request overlap and update ``state``.

    Returns ``(new_state, similarity, distance)``.
    """
    S = similarity_matrix(freqs)
    dist = similarity_to_distance(S)
    clusters, noise = labels_to_groups(dbscan(dist, eps, min_pts))
    groups = clusters + [(c,) for c in noise]
    return repartition(state, groups), S, dist


def write_matrix_csv(path, M, client_ids=None):
    """Row-major CSV with a header of client ids."""
    M = np.asarray(M, dtype=np.float64)
    ids = list(range(M.shape[0])) if client_ids is None else list(client_ids)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(str(i) for i in ids) + "\n")
        for row in M:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    with open(path) as fh:
        fh.readline()
        return np.array([[float(x) for x in line.split(",")] for line in fh if line.strip()])
