import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sht_fraclap.dyadic import CellFunction, build_tree
from sht_fraclap.geometry import Address, HalfLineWeightModel, SierpinskiModel
from sht_fraclap.haar import (
    HaarDecomposition,
    build_haar_system,
    haar_forward,
    haar_inverse,
    ker_pilambda_basis,
    ker_pilambda_mask,
    project_Pilambda,
    project_Pj,
    sierpinski_reference_wavelets,
    span_residual,
)

import oracles

S = SierpinskiModel()
H = HalfLineWeightModel()


def wavy(n, a=1.3):
    return np.array([math.sin(a * (i + 1)) + 0.1 * i for i in range(n)])


# <f, h> from the brute-force per-cube Gram-Schmidt
FROZEN_COEFFS = {
    ("sierpinski", 2): [
        -0.013899377300138356, 0.09538318071654056, 0.24486476057558948, 0.2600426508789616,
        -0.4464293913413505, -0.20822488219869167, 0.2623684903333834, -0.03908954290428667,
    ],
    ("halfline", 3): [
        -0.19135874711001072, 0.7539676141016017, 0.2364681077644289, 0.15839712676701334,
        0.030680412609756735, -0.24870778481216652, 0.2707898828229564,
    ],
}


@pytest.mark.parametrize("key", list(FROZEN_COEFFS))
def test_forward_matches_frozen_oracle(key):
    name, J = key
    t = build_tree(S if name == "sierpinski" else H, J)
    d = haar_forward(build_haar_system(t), CellFunction(t, wavy(t.n_leaves)))
    np.testing.assert_allclose(d.flat(), FROZEN_COEFFS[key], rtol=1e-11, atol=1e-13)


def test_oracle_still_agrees():
    np.testing.assert_allclose(oracles.haar_coefficients("halfline", 3, list(wavy(8))), FROZEN_COEFFS[("halfline", 3)], rtol=1e-12)


def test_counts():
    assert build_haar_system(build_tree(S, 1)).n_wavelets == 2
    assert build_haar_system(build_tree(H, 1)).n_wavelets == 1
    assert build_haar_system(build_tree(S, 3)).n_wavelets == 26


def test_halfline_single_wavelet_shape():
    t = build_tree(H, 1)
    sys = build_haar_system(t)
    m1, m2 = t.leaf_measures
    h = sys.as_cell_function(0).values
    ref = np.array([math.sqrt(m2 / m1), -math.sqrt(m1 / m2)]) / math.sqrt(m1 + m2)
    assert np.allclose(h, ref) or np.allclose(h, -ref)
    assert h @ t.leaf_measures == pytest.approx(0, abs=1e-15)


@pytest.mark.parametrize("model, J", [(S, 4), (H, 6)])
def test_orthonormal(model, J):
    t = build_tree(model, J)
    sys = build_haar_system(t)
    M = np.vstack([sys.top_scaling_function().values, sys.wavelet_matrix()])
    G = (M * t.leaf_measures) @ M.T
    assert np.abs(G - np.eye(len(G))).max() < 1e-12


@pytest.mark.parametrize("model, J", [(S, 3), (H, 5)])
def test_child_values_zero_mean(model, J):
    t = build_tree(model, J)
    sys = build_haar_system(t)
    for h in sys.wavelets():
        mu_c = t.measures[h.level + 1][sys.tree.index_of(h.cube.child(1)) : sys.tree.index_of(h.cube.child(1)) + sys.branching]
        assert h.child_values @ mu_c == pytest.approx(0, abs=1e-13)


def test_constant_has_no_wavelet_content():
    t = build_tree(S, 3)
    d = haar_forward(build_haar_system(t), CellFunction.constant(t, 1.0))
    assert d.top == pytest.approx(1.0, rel=1e-14)
    assert np.abs(d.flat()).max() < 1e-14


def test_wavelet_coefficient_is_delta():
    t = build_tree(S, 3)
    sys = build_haar_system(t)
    d = haar_forward(sys, sys.as_cell_function(7))
    e = np.zeros(sys.n_wavelets)
    e[7] = 1
    np.testing.assert_allclose(d.flat(), e, atol=1e-14)
    assert d.top == pytest.approx(0, abs=1e-14)


def test_inverse_edges():
    t = build_tree(S, 2)
    sys = build_haar_system(t)
    zero = HaarDecomposition.from_flat(sys, 0.0, np.zeros(sys.n_wavelets))
    assert np.all(haar_inverse(sys, zero).values == 0)
    one = HaarDecomposition.from_mapping(sys, 0.0, {sys.wavelet(3).id: 1.0})
    np.testing.assert_allclose(haar_inverse(sys, one).values, sys.as_cell_function(3).values, atol=1e-15)
    with pytest.raises(KeyError):
        HaarDecomposition.from_mapping(sys, 0.0, {(Address((9,)), 1): 1.0})


def test_tree_mismatch_rejected():
    sys = build_haar_system(build_tree(S, 2))
    with pytest.raises(ValueError):
        haar_forward(sys, CellFunction.constant(build_tree(S, 2), 1.0))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["sierpinski", "halfline"]))
def test_parseval_and_round_trip(seed, name):
    t = build_tree(S, 5) if name == "sierpinski" else build_tree(H, 7)
    sys = build_haar_system(t)
    f = CellFunction(t, np.random.default_rng(seed).standard_normal(t.n_leaves))
    d = haar_forward(sys, f)
    assert d.norm_sq() == pytest.approx(f.l2_norm_sq(), rel=1e-10)
    assert np.abs(haar_inverse(sys, d).values - f.values).max() < 1e-10


def test_projections():
    t = build_tree(S, 4)
    sys = build_haar_system(t)
    rng = np.random.default_rng(3)
    f = CellFunction(t, rng.standard_normal(t.n_leaves))
    np.testing.assert_allclose(project_Pj(sys, f, 4).values, f.values, atol=1e-12)
    np.testing.assert_allclose(project_Pj(sys, f, 0).values, np.full(t.n_leaves, f.mean()), atol=1e-12)
    for j in range(5):
        for k in range(5):
            lhs = project_Pj(sys, project_Pj(sys, f, k), j).values
            np.testing.assert_allclose(lhs, project_Pj(sys, f, min(j, k)).values, atol=1e-10)
    with pytest.raises(ValueError):
        project_Pj(sys, f, 5)


def test_pilambda():
    t = build_tree(S, 3)
    sys = build_haar_system(t)
    f = CellFunction(t, np.random.default_rng(0).standard_normal(t.n_leaves))
    f0 = f - CellFunction.constant(t, f.mean())
    assert np.abs(project_Pilambda(sys, f0, 1.0).values).max() < 1e-12
    full = project_Pilambda(sys, f0, 1 / 100)
    np.testing.assert_allclose(full.values, f0.values, atol=1e-12)


def test_ker_pilambda_enumeration():
    sys = build_haar_system(build_tree(S, 2))
    basis = ker_pilambda_basis(sys, 1 / 3)
    assert len(basis) == 6 and all(h.level == 1 for h in basis)
    assert len(ker_pilambda_basis(sys, 1.0)) == 8
    assert ker_pilambda_basis(sys, 1 / 9) == []


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-4, 2.0), st.floats(1e-4, 2.0))
def test_pilambda_monotone(a, b):
    sys = build_haar_system(build_tree(S, 4))
    lo, hi = sorted((a, b))
    # the kernel only grows with lambda
    assert np.all(ker_pilambda_mask(sys, lo) <= ker_pilambda_mask(sys, hi))


def test_reference_wavelets():
    t = build_tree(S, 3)
    sys = build_haar_system(t)
    for j, l in ((0, 0), (1, 2), (2, 5)):
        h1, h2 = sierpinski_reference_wavelets(sys, j, l)
        assert h1.inner(h2) == pytest.approx(0, abs=1e-14)
        assert h1.mean() == pytest.approx(0, abs=1e-14) and h2.mean() == pytest.approx(0, abs=1e-14)
        for h in (h1, h2):
            assert span_residual(sys, h, j, l) < 1e-10
    h1, _ = sierpinski_reference_wavelets(sys, 0, 0)
    assert h1.l2_norm_sq() == pytest.approx(1 / 3, rel=1e-13)
    with pytest.raises(ValueError):
        sierpinski_reference_wavelets(build_haar_system(build_tree(H, 3)), 0, 0)


def test_decomposition_csv():
    t = build_tree(S, 1)
    sys = build_haar_system(t)
    text = haar_forward(sys, CellFunction.constant(t, 1.0)).to_csv()
    lines = text.strip().splitlines()
    assert lines[0] == "cube_address,level,cube_measure,wavelet_index,coefficient"
    assert len(lines) == 1 + 1 + 2
