import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracperc.core import BudgetExceeded
from fracperc.intervals import IntervalUnion

pairs = st.lists(
    st.tuples(st.floats(-5, 5), st.floats(0, 2)).map(lambda t: (t[0], t[0] + t[1])),
    max_size=25,
)


def covered(u, x):
    return any(a <= x <= b for a, b in u)


@given(pairs)
def test_normalized(ps):
    u = IntervalUnion.from_pairs(ps)
    assert np.all(u.hi >= u.lo)
    assert np.all(u.lo[1:] > u.hi[:-1])
    assert u.total_length() == pytest.approx(float(np.sum(u.widths())))
    for a, b in ps:
        assert u.contains_union(IntervalUnion([a], [b]))


@given(pairs, pairs)
def test_intersection_and_union_pointwise(a, b):
    ua, ub = IntervalUnion.from_pairs(a), IntervalUnion.from_pairs(b)
    inter, uni = ua.intersection(ub), ua.union(ub)
    for x in np.linspace(-6, 8, 141):
        assert covered(inter, x) == (covered(ua, x) and covered(ub, x))
        assert covered(uni, x) == (covered(ua, x) or covered(ub, x))


@given(pairs, pairs)
def test_minkowski_matches_brute_force(a, b):
    s = IntervalUnion.from_pairs(a).minkowski_sum(IntervalUnion.from_pairs(b))
    brute = IntervalUnion.from_pairs([(x0 + y0, x1 + y1) for x0, x1 in a for y0, y1 in b])
    assert s == brute


def test_touching_intervals_merge_with_tolerance():
    u = IntervalUnion([0.0, 1.0 + 1e-13], [1.0, 2.0], tol=1e-12)
    assert u.to_list() == [[0.0, 2.0]]
    v = IntervalUnion([0.0, 1.0 + 1e-6], [1.0, 2.0], tol=1e-12)
    assert len(v) == 2


def test_longest_scale_clip():
    u = IntervalUnion.from_pairs([(0, 1), (2, 4.5)])
    assert u.longest() == (2.0, 4.5)
    assert u.scale(-2).to_list() == [[-9.0, -4.0], [-2.0, 0.0]]
    assert u.clip(0.5, 3).to_list() == [[0.5, 1.0], [2.0, 3.0]]
    assert IntervalUnion.empty().longest() is None
    assert u.contains_point(3.0) and not u.contains_point(1.5)


def test_minkowski_budget():
    u = IntervalUnion(np.arange(10.0) * 3, np.arange(10.0) * 3 + 1)
    with pytest.raises(BudgetExceeded):
        u.minkowski_sum(u, max_pairs=50)


def test_rejects_reversed():
    with pytest.raises(ValueError):
        IntervalUnion([1.0], [0.0])
