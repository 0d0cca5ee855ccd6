import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracperc.core import PercolationParams, Realization, generate
from fracperc.distance import (
    difference_vectors,
    distance_certificate,
    distance_profile,
    distance_set,
    far_anchor_pair,
    pair_certificate,
    pair_distance_interval,
    self_distance_set,
    sphere_slice_counts,
)
from fracperc.intervals import IntervalUnion


def brute_union(A, B, h):
    pairs = [pair_distance_interval(a, b, h) for a in A for b in B]
    return IntervalUnion([p[0] for p in pairs], [p[1] for p in pairs], 1e-12 * h)


def same_union(u, v, tol=1e-12):
    return len(u) == len(v) and np.allclose(u.lo, v.lo, rtol=0, atol=tol) and np.allclose(u.hi, v.hi, rtol=0, atol=tol)


def test_pair_interval_examples():
    assert pair_distance_interval((2, 3), (2, 3), 0.25) == (0.0, pytest.approx(0.25 * math.sqrt(2)))
    lo, hi = pair_distance_interval((0,), (3,), 0.25)
    assert (lo, hi) == (0.5, 1.0)


def test_pair_interval_sampled_oracle():
    # a shared lattice containing every face attains both extremes exactly
    rng = np.random.default_rng(0)
    h = 0.125
    grid = np.stack(np.meshgrid(*[np.linspace(0, 1, 5)] * 3, indexing="ij"), -1).reshape(-1, 3)
    for _ in range(20):
        k1, k2 = rng.integers(0, 8, 3), rng.integers(0, 8, 3)
        lo, hi = pair_distance_interval(k1, k2, h)
        x, y = (k1 + grid) * h, (k2 + grid) * h
        lattice = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=2)
        assert lattice.min() == pytest.approx(lo, abs=1e-15)
        assert lattice.max() == pytest.approx(hi, abs=1e-15)
        x = (k1 + rng.random((100_000, 3))) * h
        y = (k2 + rng.random((100_000, 3))) * h
        dist = np.linalg.norm(x - y, axis=1)
        assert lo <= dist.min() and dist.max() <= hi


@given(st.integers(0, 2**32), st.integers(0, 2**32), st.integers(1, 3))
def test_distance_set_matches_brute_force(s1, s2, n):
    a = generate(PercolationParams(2, 3, 0.5, s1), 3)
    b = generate(PercolationParams(2, 3, 0.5, s2), 3)
    got = distance_set(a, b, n)
    assert same_union(got, brute_union(a.levels[n], b.levels[n], 3.0**-n))
    assert got == distance_set(b, a, n)


def test_full_and_extinct():
    full = generate(PercolationParams(2, 2, 1.0), 4)
    for n in range(5):
        assert distance_set(full, full, n).to_list() == [[0.0, pytest.approx(math.sqrt(2))]]
    levels = (np.zeros((1, 2), dtype=np.int64), np.empty((0, 2), dtype=np.int64))
    dead = Realization(PercolationParams(2, 2, 0.5), 1, levels)
    assert distance_set(full, dead, 1).is_empty
    assert self_distance_set(dead, 1).is_empty
    assert distance_certificate(dead) is None


def test_single_cube_self_distance():
    levels = (np.zeros((1, 2), dtype=np.int64), np.array([[1, 0]]))
    one = Realization(PercolationParams(2, 2, 0.5), 1, levels)
    assert self_distance_set(one, 1).to_list() == [[0.0, pytest.approx(0.5 * math.sqrt(2))]]
    assert self_distance_set(one, 1, distinct=True).is_empty


@given(st.integers(0, 2**32))
def test_nesting_and_sandwich(seed):
    real = generate(PercolationParams(2, 3, 0.45, seed), 4)
    prev = None
    for n in range(5):
        u = self_distance_set(real, n)
        if len(u):
            assert u.lo.min() >= 0 and u.hi.max() <= math.sqrt(2) + 1e-12
        if prev is not None:
            assert prev.contains_union(u, 1e-12)
        prev = u


def test_fft_and_pairwise_paths_agree():
    real = generate(PercolationParams(2, 3, 0.6, 4), 4)
    A = real.levels[4]
    assert np.array_equal(difference_vectors(A, A, 81), difference_vectors(A, A, 81, max_grid=0))


def test_distinct_pairs_differ_in_every_coordinate():
    real = generate(PercolationParams(2, 2, 0.7, 1), 4)
    A = real.levels[3]
    h = 2.0**-3
    want = brute_union([a for a in A], [b for b in A], h)
    assert same_union(self_distance_set(real, 3), want)
    pairs = [pair_distance_interval(a, b, h) for a in A for b in A if np.all(a != b)]
    distinct = IntervalUnion([p[0] for p in pairs], [p[1] for p in pairs], 1e-12 * h)
    assert same_union(self_distance_set(real, 3, distinct=True), distinct)


def test_sphere_counts_brute_force():
    a = generate(PercolationParams(2, 3, 0.6, 2), 3)
    b = generate(PercolationParams(2, 3, 0.6, 3), 3)
    h = 3.0**-3
    ts = np.linspace(0, 1.5, 31)
    pairs = [pair_distance_interval(x, y, h) for x in a.levels[3] for y in b.levels[3]]
    want = [sum(lo <= t <= hi for lo, hi in pairs) for t in ts]
    assert sphere_slice_counts(a, b, 3, ts).tolist() == want


def test_certificates():
    full = generate(PercolationParams(2, 2, 1.0), 4)
    cert = distance_certificate(full)
    assert cert.hi == pytest.approx(math.sqrt(2))
    prof = distance_profile(full, full, 3)
    assert prof.to_dict()["kind"] == "distance" and prof.pairs == 64**2
    real = generate(PercolationParams(2, 3, 0.7, 6), 5)
    ca, cb = far_anchor_pair(real, 1)
    pc = pair_certificate(real, ca, cb)
    assert pc is None or pc.length > 0
