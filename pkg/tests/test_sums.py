import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracperc.core import PercolationParams, Realization
from fracperc.intervals import IntervalUnion
from fracperc.keyed import derive_seed
from fracperc.slices2d import slice_length
from fracperc.stats import mean_se
from fracperc.sums import (
    Coefficients,
    FamilyRealization,
    Graph,
    InfeasibleError,
    adjust_probabilities,
    adjustment_violations,
    algebraic_sum,
    c7_bound,
    cube_slice_volumes,
    dependency_graph,
    family_partition_profile,
    generate_family,
    greedy_coloring,
    hyperplane_slice_volume,
    interval_certificate,
    is_independent,
    lipschitz_constant,
    planar_match,
    product_cubes,
    product_volume,
    slice_cubes,
    t_grid,
    volume_to_count_check,
)

DIAG = Coefficients.from_raw([1, 1])


def member(M, levels):
    levels = tuple(np.asarray(lv, dtype=np.int64).reshape(-1, 1) for lv in levels)
    return Realization(PercolationParams(1, M, 0.5), len(levels) - 1, levels)


def family_of(M, members, probs=None):
    probs = probs or (0.5,) * len(members)
    return FamilyRealization(M, tuple(probs), members[0].depth, tuple(members))


def surviving_family(M, probs, depth, start=0):
    for s in range(start, start + 500):
        fam = generate_family(M, probs, depth, seed=s)
        if fam.alive(depth):
            return fam
    raise AssertionError("no surviving family")


def section_oracle(a, t):
    """(d-1)-volume of the unit cube cut by a.x = t via the alternating vertex sum."""
    d = len(a)
    total = 0.0
    for v in itertools.product((0, 1), repeat=d):
        x = t - float(np.dot(a, v))
        if x > 0:
            total += (-1) ** sum(v) * x ** (d - 1)
    return total / (math.factorial(d - 1) * math.prod(a)) * float(np.linalg.norm(a))


def same_union(u, v, tol=1e-12):
    return len(u) == len(v) and np.allclose(u.lo, v.lo, rtol=0, atol=tol) and np.allclose(u.hi, v.hi, rtol=0, atol=tol)


def test_coefficients():
    c = Coefficients.from_raw([3, -4])
    assert c.a == pytest.approx((0.6, 0.8))
    with pytest.raises(ValueError):
        Coefficients((0.6, 0.6))
    with pytest.raises(ValueError):
        Coefficients.from_raw([1, 0])


def test_generate_family_bounds():
    with pytest.raises(InfeasibleError):
        generate_family(3, (0.3, 0.8), 4)
    fam = generate_family(3, (0.8, 0.7), 4, seed=2)
    assert fam.d == 2 and fam.p == pytest.approx(0.56)
    assert fam.members[0].params.seed == derive_seed(2, 0) != fam.members[1].params.seed


def test_full_sum_is_one_interval():
    fam = generate_family(2, (1.0, 1.0, 1.0), 4)
    c = Coefficients.from_raw([1, 2, 2])
    for n in range(5):
        assert algebraic_sum(fam, c, n).to_list() == [[0.0, pytest.approx(c.total)]]
    cert = interval_certificate(fam, c)
    assert cert.lo == 0.0 and cert.length == pytest.approx(c.total)


def test_extinct_member_gives_empty_sum():
    fam = family_of(2, [member(2, [[0], [0, 1], []]), member(2, [[0], [1], [2, 3]])])
    assert algebraic_sum(fam, DIAG, 2).is_empty
    assert interval_certificate(fam, DIAG, 2) is None


def test_small_sum_against_enumeration():
    fam = family_of(2, [member(2, [[0], [0, 1]]), member(2, [[0], [1]])])
    got = algebraic_sum(fam, DIAG, 1)
    a = 1 / math.sqrt(2)
    rho = 2 * a * 0.5 / 2
    centers = [a * (0.25 + 0.75), a * (0.75 + 0.75)]
    assert same_union(got, IntervalUnion([c - rho for c in centers], [c + rho for c in centers], 1e-12 * DIAG.total))


@given(st.integers(0, 2**32), st.floats(0.1, 1.0), st.floats(0.1, 1.0))
def test_sum_matches_cube_enumeration_and_nests(seed, a1, a2):
    fam = generate_family(3, (0.7, 0.6), 4, seed=seed)
    c = Coefficients.from_raw([a1, a2])
    prev = None
    for n in range(5):
        got = algebraic_sum(fam, c, n)
        h = 3.0**-n
        cubes = product_cubes(fam, n)
        mid = ((cubes + 0.5) * h) @ c.array
        rho = c.total * h / 2
        assert same_union(got, IntervalUnion(mid - rho, mid + rho, 1e-12 * c.total))
        if prev is not None:
            assert prev.contains_union(got, 1e-12)
        prev = got


def test_certificate_requires_positive_min_len():
    fam = generate_family(2, (1.0, 1.0), 2)
    with pytest.raises(ValueError):
        interval_certificate(fam, DIAG, min_len=0.0)


def test_adjust_examples():
    q = adjust_probabilities([0.9, 0.9, 0.9], 2)
    delta = 0.5 * (2 ** (-2 / 3) + 2 ** (-1 / 2))
    assert q == pytest.approx([delta] * 3)
    assert delta == pytest.approx(0.6686, abs=1e-4)
    p = [0.42, 0.9, 0.9]
    q = adjust_probabilities(p, 3)
    assert q[0] == 0.42
    assert adjustment_violations(p, q, 3) == []
    assert list(adjust_probabilities([0.8, 0.7], 3)) == [0.8, 0.7]
    with pytest.raises(InfeasibleError):
        adjust_probabilities([0.35, 0.35, 0.35], 3)
    with pytest.raises(InfeasibleError):
        adjust_probabilities([0.2, 0.9], 3)


@st.composite
def adjust_inputs(draw):
    d = draw(st.integers(2, 6))
    M = draw(st.integers(2, 5))
    p = draw(st.lists(st.floats(1.0 / M + 1e-6, 1.0), min_size=d, max_size=d))
    return d, M, p


@given(adjust_inputs())
def test_adjust_property(inp):
    d, M, p = inp
    if math.prod(p) <= M ** (-d + 1):
        with pytest.raises(InfeasibleError):
            adjust_probabilities(p, M)
        return
    q = adjust_probabilities(p, M)
    assert adjustment_violations(p, q, M, 1e-9) == []


def test_slice_volume_examples():
    fam = generate_family(2, (1.0, 1.0), 3)
    assert hyperplane_slice_volume(fam, DIAG, 1 / math.sqrt(2), 0).volume == pytest.approx(math.sqrt(2))
    assert hyperplane_slice_volume(fam, DIAG, -0.1, 2).volume == 0.0
    assert hyperplane_slice_volume(fam, DIAG, 1.5, 2).volume == 0.0
    fam3 = generate_family(2, (1.0, 1.0, 1.0), 1)
    c3 = Coefficients.from_raw([1, 1, 1])
    sv = hyperplane_slice_volume(fam3, c3, 1.5 / math.sqrt(3), 0)
    assert sv.volume == pytest.approx(3 * math.sqrt(3) / 4, abs=1e-12)
    mc = hyperplane_slice_volume(fam3, c3, 1.5 / math.sqrt(3), 0, mode="mc", samples=2_000_000, seed=1)
    assert abs(mc.volume - sv.volume) <= 4 * mc.se
    with pytest.raises(ValueError):
        hyperplane_slice_volume(generate_family(2, (1.0,) * 4, 1), Coefficients.from_raw([1] * 4), 1.0, 0)


@given(st.lists(st.floats(0.05, 1.0), min_size=3, max_size=3), st.floats(0.0, 1.0))
def test_plane_cube_area_matches_vertex_formula(raw, frac):
    c = Coefficients.from_raw(raw)
    t = frac * c.total
    got = cube_slice_volumes(np.zeros((1, 3), dtype=np.int64), 0, 2, c, t)[0]
    assert got == pytest.approx(section_oracle(c.array, t), abs=1e-12)


def test_subcube_areas_sum_to_unit_cube_area():
    c = Coefficients.from_raw([1, 2, 3])
    cubes = np.array(list(itertools.product(range(4), repeat=3)))
    for t in (0.3, 1.0, 1.4):
        whole = section_oracle(c.array, t)
        assert math.fsum(cube_slice_volumes(cubes, 1, 4, c, t)) == pytest.approx(whole, abs=1e-12)


def test_mc_matches_exact_on_random_family():
    fam = surviving_family(2, (0.9, 0.9, 0.9), 4)
    c = Coefficients.from_raw([1, 2, 3])
    for t in (0.6, 1.1):
        ex = hyperplane_slice_volume(fam, c, t, 4)
        mc = hyperplane_slice_volume(fam, c, t, 4, mode="mc", samples=1_000_000, seed=3)
        assert abs(ex.volume - mc.volume) <= 4 * mc.se + 1e-12


@given(st.integers(0, 2**32), st.floats(0.05, 1.0), st.floats(0.05, 1.0), st.floats(0.0, 1.0))
def test_d2_matches_planar_slices(seed, a1, a2, frac):
    fam = generate_family(2, (0.8, 0.75), 5, seed=seed)
    c = Coefficients.from_raw([a1, a2])
    t = frac * c.total
    for n in (0, 3, 5):
        real, line = planar_match(fam, c, t, n)
        assert hyperplane_slice_volume(fam, c, t, n).volume == pytest.approx(slice_length(real, n, line), abs=1e-12)


@given(st.integers(0, 2**32), st.floats(0.0, 1.0))
def test_slice_cubes_match_brute_force(seed, frac):
    fam = generate_family(2, (0.8, 0.8, 0.8), 4, seed=seed)
    c = Coefficients.from_raw([1, 3, 2])
    t = frac * c.total
    got = {tuple(x) for x in slice_cubes(fam, c, t, 4).tolist()}
    allc = product_cubes(fam, 4)
    h = 2.0**-4
    mid = ((allc + 0.5) * h) @ c.array
    want = {tuple(x) for x in allc[np.abs(mid - t) < c.total * h / 2 * (1 - 1e-9)].tolist()}
    assert got == want


def test_expected_volume():
    probs = (0.8, 0.7)
    for n in (2, 4):
        vols = [product_volume(generate_family(3, probs, n, seed=derive_seed(8, i)), n) for i in range(1000)]
        m, se = mean_se(vols)
        assert abs(m - 0.56**n) <= 3 * se


def test_dependency_graph_small_cases():
    single = family_of(2, [member(2, [[0], [1]]), member(2, [[0], [0]])])
    g = dependency_graph(single, DIAG, 0.5, 1)
    assert len(g.cubes) == 1 and len(g.edges) == 0
    shared = family_of(2, [member(2, [[0], [1]]), member(2, [[0], [0, 1]])])
    c = Coefficients.from_raw([1, 1e-3])
    g = dependency_graph(shared, c, float(np.dot(c.a, (0.75, 0.5))), 1)
    assert len(g.cubes) == 2 and len(g.edges) == 1


@given(st.integers(0, 2**32), st.floats(0.3, 1.4))
def test_dependency_edges_brute_force(seed, t):
    fam = generate_family(2, (0.9, 0.9, 0.9), 3, seed=seed)
    c = Coefficients.from_raw([1, 1, 1])
    g = dependency_graph(fam, c, t, 3)
    want = {(i, j) for i, j in itertools.combinations(range(len(g.cubes)), 2) if np.any(g.cubes[i] == g.cubes[j])}
    assert {tuple(e) for e in g.edges.tolist()} == want
    shared = g.shared_counts()
    if len(g.cubes):
        assert shared.shape == g.cubes.shape
        assert g.max_degree() <= shared.sum(axis=1).max()


def random_graph(rng, n, max_deg):
    deg = np.zeros(n, dtype=int)
    edges = []
    for _ in range(n * max_deg):
        u, v = rng.integers(0, n, 2)
        if u != v and deg[u] < max_deg and deg[v] < max_deg and (min(u, v), max(u, v)) not in edges:
            edges.append((min(u, v), max(u, v)))
            deg[u] += 1
            deg[v] += 1
    return Graph(n, edges)


def test_coloring_examples():
    assert len(greedy_coloring(Graph(5))) == 1
    k = 6
    complete = Graph(k, list(itertools.combinations(range(k), 2)))
    assert len(greedy_coloring(complete)) == k == complete.max_degree() + 1
    rng = np.random.default_rng(0)
    for _ in range(50):
        g = random_graph(rng, int(rng.integers(1, 60)), 7)
        classes = greedy_coloring(g)
        assert len(classes) <= 8
        assert all(is_independent(g, cl) for cl in classes)
        assert sorted(np.concatenate(classes).tolist()) == list(range(g.n_vertices))


def test_partition_profile_full_family():
    fam = generate_family(2, (1.0, 1.0, 1.0), 4)
    c = Coefficients.from_raw([1, 2, 2])
    prof = family_partition_profile(fam, c, 1.1, 3, epsilon=0.1)
    for row in prof.rows:
        assert row["Z"] == pytest.approx(row["z"], rel=1e-12, abs=1e-15)
    assert prof.small_ok
    sizes = sum(len(cl) for cl in prof.classes)
    assert sizes == len(slice_cubes(fam, c, 1.1, 3))


def test_partition_small_classes_shrink():
    fam = surviving_family(2, (0.8, 0.8), 7)
    prof = family_partition_profile(fam, DIAG, 0.7, 6)
    for row in prof.rows:
        if not row["large"]:
            assert row["Z"] <= row["z"] + 1e-15


def test_volume_to_count_full_square():
    fam = generate_family(2, (1.0, 1.0), 5)
    for n in (2, 4, 5):
        rep = volume_to_count_check(fam, DIAG, n, np.append(t_grid(DIAG, n, 2)[1:-1], DIAG.total / 2))
        assert rep.Z == pytest.approx(2**n * math.sqrt(2))
        assert rep.max_ratio <= 2 * math.sqrt(2)
    empty = volume_to_count_check(fam, DIAG, 2, [-1.0])
    assert empty.rows[0]["ratio"] is None


def test_lipschitz_and_c7():
    fam = surviving_family(3, (0.8, 0.8), 5)
    assert 0.0 <= lipschitz_constant(fam, DIAG, 4, t_grid(DIAG, 4, 3, 1.5)) < 50.0
    assert c7_bound(Coefficients.from_raw([1, 2])) == pytest.approx(2 * 3 / 1)
