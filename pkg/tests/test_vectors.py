import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ragek.vectors import SparseUpdate, StructuralError, aggregate, densify, restrict

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize(
    "dim, pairs, expected",
    [
        (4, [(1, 2.5)], [0, 2.5, 0, 0]),
        (3, [], [0, 0, 0]),
        (4, [(0, -1.0), (3, 4.0)], [-1.0, 0, 0, 4.0]),
    ],
)
def test_densify(dim, pairs, expected):
    np.testing.assert_array_equal(densify(SparseUpdate.from_pairs(dim, pairs)), expected)


@pytest.mark.parametrize(
    "dim, updates, expected",
    [
        (3, [[(0, 1.0)], [(0, 2.0), (2, -1.0)]], [3.0, 0, -1.0]),
        (3, [], [0, 0, 0]),
        (2, [[(1, 5.0)]], [0, 5.0]),
    ],
)
def test_aggregate(dim, updates, expected):
    us = [SparseUpdate.from_pairs(dim, p) for p in updates]
    np.testing.assert_array_equal(aggregate(us, dim), expected)


@pytest.mark.parametrize("pairs", [[(1, 1.0), (1, 2.0)], [(2, 1.0), (0, 1.0)], [(4, 1.0)], [(-1, 1.0)]])
def test_malformed_update_rejected(pairs):
    with pytest.raises(StructuralError):
        SparseUpdate.from_pairs(4, pairs)


def test_entries_must_be_requested():
    with pytest.raises(StructuralError):
        SparseUpdate.from_pairs(4, [(1, 1.0)], requested={0, 2})
    u = SparseUpdate.from_pairs(4, [(1, 1.0)], requested={1, 3})
    assert u.requested == {1, 3}


def test_aggregate_dimension_mismatch():
    with pytest.raises(StructuralError):
        aggregate([SparseUpdate.from_pairs(3, [(0, 1.0)])], 4)


def test_update_is_immutable():
    u = SparseUpdate.from_pairs(3, [(0, 1.0)])
    with pytest.raises(ValueError):
        u.values[0] = 2.0


@settings(max_examples=200)
@given(arrays(np.float64, st.integers(1, 40), elements=finite), st.data())
def test_restrict_round_trip(v, data):
    support = data.draw(st.sets(st.integers(0, v.size - 1)))
    mask = np.zeros(v.size, dtype=bool)
    mask[list(support)] = True
    np.testing.assert_array_equal(densify(restrict(v, support)), np.where(mask, v, 0.0))


@settings(max_examples=100)
@given(st.integers(1, 30), st.lists(st.lists(st.tuples(st.integers(0, 29), finite), max_size=10), max_size=6))
def test_aggregate_matches_ordered_densify_sum(dim, raw):
    updates = []
    for pairs in raw:
        dedup = {i % dim: v for i, v in pairs}
        updates.append(SparseUpdate.from_pairs(dim, sorted(dedup.items())))
    expected = np.zeros(dim)
    for u in updates:
        expected = expected + densify(u)
    total = aggregate(updates, dim)
    assert total.tobytes() == expected.tobytes()
    assert np.linalg.norm(total) <= sum(np.linalg.norm(densify(u)) for u in updates) * (1 + 1e-12) + 1e-12
