import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracperc.core import (
    BudgetExceeded,
    CubeIndex,
    ExtinctError,
    PercolationParams,
    Realization,
    box_count_slope,
    expected_total_cubes,
    generate,
    subtree,
    survival_estimate,
    theoretical_dimension,
)
from fracperc.keyed import derive_seed
from fracperc.stats import mean_se


def gw_survival(d, M, p, depth):
    """P(level ``depth`` non-empty) by iterating the binomial generating function."""
    s = 0.0
    for _ in range(depth):
        s = (1 - p + p * s) ** (M**d)
    return 1.0 - s


def gw_limit_survival(d, M, p):
    s = 0.0
    for _ in range(10_000):
        s = (1 - p + p * s) ** (M**d)
    return 1.0 - s


@pytest.mark.parametrize("kwargs", [dict(d=0), dict(M=1), dict(p=0.0), dict(p=1.5), dict(seed=-1)])
def test_params_validation(kwargs):
    base = dict(d=2, M=2, p=0.5, seed=0)
    base.update(kwargs)
    with pytest.raises(ValueError):
        PercolationParams(**base)


def test_full_retention_counts():
    real = generate(PercolationParams(2, 3, 1.0, 5), 4)
    assert [real.count(n) for n in range(5)] == [3 ** (2 * n) for n in range(5)]
    assert box_count_slope(real, 1, 4) == pytest.approx(2.0, abs=1e-12)


def test_theoretical_dimension():
    assert theoretical_dimension(PercolationParams(2, 2, 0.85)) == pytest.approx(math.log(3.4) / math.log(2))
    assert theoretical_dimension(PercolationParams(2, 2, 1.0)) == pytest.approx(2.0)


@given(st.integers(1, 3), st.integers(2, 4), st.floats(0.2, 1.0), st.integers(0, 2**32))
def test_generate_nesting_and_determinism(d, M, p, seed):
    depth = {1: 6, 2: 4, 3: 2}[d]
    params = PercolationParams(d, M, p, seed)
    a = generate(params, depth)
    a.validate()
    b = generate(params, depth)
    assert all(np.array_equal(x, y) for x, y in zip(a.levels, b.levels))


def test_monotone_in_p():
    lo = generate(PercolationParams(2, 2, 0.5, 9), 6)
    hi = generate(PercolationParams(2, 2, 0.8, 9), 6)
    for n in range(7):
        assert hi.contains(n, lo.levels[n]).all()


def test_extinct_levels_stay_empty():
    for seed in range(200):
        real = generate(PercolationParams(1, 2, 0.3, seed), 8)
        k = real.extinction_level()
        if k is not None:
            assert all(real.count(n) == 0 for n in range(k, 9))
            with pytest.raises(ExtinctError):
                box_count_slope(real, 0, 8)
            return
    pytest.fail("expected an extinct realization")


def test_survival_supercritical_matches_branching_oracle():
    # d=1, M=2, p=0.9: extinction probability solves q = (0.1 + 0.9 q)^2, q = 1/81
    assert gw_limit_survival(1, 2, 0.9) == pytest.approx(80 / 81, abs=1e-12)
    params = PercolationParams(1, 2, 0.9, 3)
    est = survival_estimate(params, 20, 4000)
    target = gw_survival(1, 2, 0.9, 20)
    assert abs(est - target) <= 4 * math.sqrt(target * (1 - target) / 4000)


def test_survival_subcritical_matches_branching_oracle():
    params = PercolationParams(1, 2, 0.45, 8)
    est = survival_estimate(params, 10, 4000)
    target = gw_survival(1, 2, 0.45, 10)
    assert abs(est - target) <= 4 * math.sqrt(target * (1 - target) / 4000)


def test_mean_count_is_geometric():
    params = PercolationParams(2, 2, 0.6)
    counts = [generate(params.with_seed(derive_seed(1, i)), 5).count(5) for i in range(2000)]
    m, se = mean_se(counts)
    assert abs(m - 2.4**5) <= 3 * se


def test_cube_index_geometry():
    c = CubeIndex(3, 2, (4, 7))
    assert c.side == pytest.approx(1 / 9)
    assert c.center == pytest.approx((4.5 / 9, 7.5 / 9))
    assert c.parent() == CubeIndex(3, 1, (1, 2))
    assert c.path() == [(1, 2), (1, 1)]
    with pytest.raises(ValueError):
        CubeIndex(3, 1, (3, 0))


def test_contains_and_retained():
    real = generate(PercolationParams(2, 2, 0.7, 4), 5)
    cube = CubeIndex(2, 5, tuple(real.levels[5][0]))
    assert real.is_retained(cube)
    assert not real.contains(5, [[-1, 0], [32, 0]]).any()


def test_subtree_rescales():
    real = generate(PercolationParams(2, 2, 0.8, 2), 6)
    k = tuple(real.levels[2][0])
    sub = subtree(real, CubeIndex(2, 2, k))
    assert sub.depth == 4
    sub.validate()
    assert sum(sub.count(j) for j in range(5)) <= sum(real.count(j) for j in range(2, 7))
    assert sub.count(4) == int(np.all(real.levels[6] // 16 == np.array(k), axis=1).sum())


@pytest.mark.parametrize("suffix", [".json", ".npz"])
def test_save_load_roundtrip(tmp_path, suffix):
    real = generate(PercolationParams(2, 3, 0.5, 12), 4)
    path = tmp_path / f"r{suffix}"
    real.save(path)
    back = Realization.load(path)
    assert back.params == real.params
    assert all(np.array_equal(x, y) for x, y in zip(back.levels, real.levels))


def test_budget(monkeypatch):
    monkeypatch.setenv("FRACPERC_MAX_CUBES", "100")
    with pytest.raises(BudgetExceeded):
        generate(PercolationParams(2, 2, 1.0), 6)
    assert expected_total_cubes(PercolationParams(2, 2, 1.0), 2) == 1 + 4 + 16
