"""Gradient sparsifiers: top-k, rTop-k and rAge-k, plus compression analytics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aging import age_update, rank_by_age
from .vectors import SparseUpdate, StructuralError


class ParameterError(ValueError):
    pass


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True)
class TopK:
    k: int
    name = "topk"

    @property
    def r(self):
        return self.k

    def validate(self, d):
        _check_budget(self.k, self.k, d)


@dataclass(frozen=True)
class RTopK:
    r: int
    k: int
    name = "rtopk"

    def validate(self, d):
        _check_budget(self.r, self.k, d)


@dataclass(frozen=True)
class RAgeK:
    r: int
    k: int
    name = "ragek"

    def validate(self, d):
        _check_budget(self.r, self.k, d)


SPARSIFIERS = {"topk": TopK, "rtopk": RTopK, "ragek": RAgeK}


def make_sparsifier(name, r, k):
    if name == "topk":
        return TopK(k)
    if name not in SPARSIFIERS:
        raise ParameterError(f"unknown sparsifier {name!r}; choose from {sorted(SPARSIFIERS)}")
    return SPARSIFIERS[name](r, k)


def _check_budget(r, k, d):
    if not 1 <= k <= r <= d:
        raise ParameterError(f"budgets must satisfy 1 <= k <= r <= d, got k={k}, r={r}, d={d}")


def _ranked_by_magnitude(g):
    # stable argsort on -|g| keeps lower index first among equal magnitudes
    return np.argsort(-np.abs(g), kind="stable")


def top_r_indices(g, r) -> np.ndarray:
    """Indices of the ``r`` largest |g|, ties to the lower index, sorted ascending."""
    g = np.asarray(g, dtype=np.float64)
    if not 1 <= r <= g.size:
        raise ParameterError(f"r={r} out of range for dimension {g.size}")
    return np.sort(_ranked_by_magnitude(g)[:r])


def top_k_sparsify(g, k) -> SparseUpdate:
    g = np.asarray(g, dtype=np.float64)
    idx = top_r_indices(g, k)
    return SparseUpdate(g.size, idx, g[idx])


def r_top_k_sparsify(g, r, k, rng) -> SparseUpdate:
    """Keep a uniformly random ``k``-subset of the top-``r`` coordinates."""
    g = np.asarray(g, dtype=np.float64)
    _check_budget(r, k, g.size)
    cand = top_r_indices(g, r)
    if k == r:
        idx = cand
    else:
        idx = np.sort(rng.choice(cand, size=k, replace=False))
    return SparseUpdate(g.size, idx, g[idx])


def r_age_k_sparsify(g, ages, r, k):
    """Keep the ``k`` stalest of the top-``r`` coordinates.

    Returns the sparse update and the aged vector (all ages +1, selected
    coordinates reset to zero).
    """
    g = np.asarray(g, dtype=np.float64)
    ages = np.asarray(ages, dtype=np.int64)
    if ages.shape != g.shape:
        raise ParameterError(f"age vector shape {ages.shape} does not match gradient {g.shape}")
    _check_budget(r, k, g.size)
    cand = top_r_indices(g, r)
    idx = np.sort(rank_by_age(cand, ages, g[cand])[:k])
    return SparseUpdate(g.size, idx, g[idx]), age_update(ages, idx)


@dataclass(frozen=True)
class CompressionStats:
    beta: float
    gamma_linear: float
    gamma_safe: float
    retained_energy_fraction: float


def gamma_linear(d, r, k, beta):
    return k / (k + (r - k) * beta + (d - r))


def gamma_safe(d, r, k, beta):
    return k / (k + (r - k) * beta**2 + (d - r))


def magnitude_ratio(g, r):
    """Largest |g| over the r-th largest |g|."""
    mags = np.sort(np.abs(np.asarray(g, dtype=np.float64)))[::-1]
    if not 1 <= r <= mags.size:
        raise ParameterError(f"r={r} out of range for dimension {mags.size}")
    if mags[r - 1] == 0:
        raise DegenerateInputError("r-th largest magnitude is zero; beta is undefined")
    return float(mags[0] / mags[r - 1])


def compression_stats(g, r, k) -> CompressionStats:
    g = np.asarray(g, dtype=np.float64)
    _check_budget(r, k, g.size)
    beta = magnitude_ratio(g, r)
    # worst admissible rAge-k choice: the k smallest magnitudes among the top r
    top = np.sort(np.abs(g[top_r_indices(g, r)]))
    retained = float(np.sum(top[:k] ** 2) / np.dot(g, g))
    return CompressionStats(
        beta=beta,
        gamma_linear=gamma_linear(g.size, r, k, beta),
        gamma_safe=gamma_safe(g.size, r, k, beta),
        retained_energy_fraction=retained,
    )


__all__ = [
    "CompressionStats",
    "DegenerateInputError",
    "ParameterError",
    "RAgeK",
    "RTopK",
    "StructuralError",
    "TopK",
    "compression_stats",
    "gamma_linear",
    "gamma_safe",
    "magnitude_ratio",
    "make_sparsifier",
    "r_age_k_sparsify",
    "r_top_k_sparsify",
    "top_k_sparsify",
    "top_r_indices",
]
