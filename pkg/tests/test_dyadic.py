import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sht_fraclap.dyadic import (
    CellFunction,
    ResourceLimitError,
    ball_measure,
    build_tree,
    compare_measure_ball_delta,
    dyadic_distance,
    smallest_common_cube,
    verify_christ_properties,
)
from sht_fraclap.geometry import Address, HalfLineWeightModel, SierpinskiModel

import oracles

S = SierpinskiModel()
H = HalfLineWeightModel()


def test_tree_j2():
    t = build_tree(S, 2)
    assert t.n_cubes == 13
    assert t.n_leaves == 9
    np.testing.assert_allclose(t.leaf_measures, np.full(9, 1 / 9), rtol=1e-15)
    assert len(json.loads(t.to_json())["cubes"]) == 13


def test_tree_j0():
    t = build_tree(S, 0)
    assert t.n_cubes == 1 and t.n_leaves == 1


def test_halfline_j1_measures():
    t = build_tree(H, 1)
    np.testing.assert_allclose(t.leaf_measures, [2 * math.sqrt(0.5), 2 - 2 * math.sqrt(0.5)], rtol=1e-14)


def test_leaf_cap():
    with pytest.raises(ResourceLimitError, match="729"):
        build_tree(S, 7, max_leaves=729)


def test_leaf_points_match_oracle():
    for model, name, J in ((S, "sierpinski", 3), (H, "halfline", 4)):
        t = build_tree(model, J)
        ref = np.array([p for _, _, p in oracles.leaves(name, J)])
        np.testing.assert_allclose(t.leaf_points, ref, atol=1e-15)
        ref_mu = [m for _, m, _ in oracles.leaves(name, J)]
        np.testing.assert_allclose(t.leaf_measures, ref_mu, rtol=1e-12)


@pytest.mark.parametrize(
    "a, b, expected",
    [((1, 2), (1, 3), (1,)), ((2, 2), (2, 2), (2, 2)), ((1, 1), (3, 1), ())],
)
def test_smallest_common_cube(a, b, expected):
    t = build_tree(S, 2)
    assert smallest_common_cube(t, Address(a), Address(b)) == Address(expected)


def test_smallest_common_cube_other_tree():
    t = build_tree(S, 2)
    with pytest.raises(ValueError):
        smallest_common_cube(t, Address((1, 2)), Address((1, 2, 3)))


def test_dyadic_distance_values():
    t = build_tree(S, 2)
    assert dyadic_distance(t, Address((1, 2)), Address((1, 3))) == pytest.approx(1 / 3, rel=1e-15)
    assert dyadic_distance(t, Address((2, 2)), Address((2, 2))) == 0
    h = build_tree(H, 2)
    assert dyadic_distance(h, h.parse_address("2:0"), h.parse_address("2:3")) == pytest.approx(2.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 80), st.integers(0, 80), st.integers(0, 80))
def test_ultrametric_property(i, j, k):
    t = build_tree(S, 4)
    D = t.delta_matrix()
    assert D[i, k] <= max(D[i, j], D[j, k])
    assert D[i, j] == D[j, i]


def test_delta_matrix_matches_oracle():
    t = build_tree(H, 3)
    L = oracles.leaves("halfline", 3)
    for i, (da, _, _) in enumerate(L):
        for k, (db, _, _) in enumerate(L):
            want = 0.0 if i == k else oracles.cube_measure("halfline", oracles.common_prefix(da, db))
            assert t.delta_matrix()[i, k] == pytest.approx(want, rel=1e-13)


def test_ball_measure_edges():
    t = build_tree(S, 3)
    x = t.leaf_address(4)
    assert ball_measure(t, x, 0.0) == pytest.approx(1 / 27)
    assert ball_measure(t, x, S.cell_diameter(0)) == pytest.approx(1.0)


def test_ball_measure_refinement():
    # brute-force count: 1/9 at both J=5 and J=7
    assert oracles.ball_measure("sierpinski", 5, 0, 0.25) == pytest.approx(1 / 9)
    v5 = ball_measure(build_tree(S, 5), Address((1,) * 5), 0.25)
    v7 = ball_measure(build_tree(S, 7), Address((1,) * 7), 0.25)
    assert v5 == pytest.approx(0.11111111111111108, rel=1e-12)
    assert abs(v5 - v7) <= 0.2 * v7


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 242), st.floats(0, 1.5), st.floats(0, 1.5))
def test_ball_measure_monotone(k, r1, r2):
    t = build_tree(S, 5)
    lo, hi = sorted((r1, r2))
    x = t.leaf_address(k)
    assert ball_measure(t, x, lo) <= ball_measure(t, x, hi)


def test_compare_measure_ball_delta():
    c6 = compare_measure_ball_delta(build_tree(S, 6), 10_000, seed=0)
    c7 = compare_measure_ball_delta(build_tree(S, 7), 10_000, seed=0)
    assert np.isfinite(c6) and 0.5 <= c7 / c6 <= 2
    assert np.isfinite(compare_measure_ball_delta(build_tree(H, 8), 10_000, seed=0))


def test_christ_sierpinski():
    rep = verify_christ_properties(build_tree(S, 4))
    for row in rep["levels"]:
        assert 1 - 1e-12 <= row["diam_over_nu_j_min"] <= row["diam_over_nu_j_max"] <= math.sqrt(2) + 1e-12
        assert row["measure_sum"] == pytest.approx(1.0, abs=1e-12)
    assert rep["pass"]


def test_christ_halfline():
    rep = verify_christ_properties(build_tree(H, 3))
    assert all(rep["structural"].values()) and rep["pass"]


def test_cell_function_checks():
    t = build_tree(S, 1)
    with pytest.raises(ValueError):
        CellFunction(t, np.ones(4))
    with pytest.raises(ValueError):
        CellFunction(t, np.array([1.0, np.nan, 0.0]))
    f = CellFunction.constant(t, 2.0)
    assert f.l2_norm_sq() == pytest.approx(4.0)
    assert f.mean() == pytest.approx(2.0)
    g = CellFunction.indicator(t, Address((2,)))
    assert f.inner(g) == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        f.inner(CellFunction.constant(build_tree(S, 1), 1.0))
