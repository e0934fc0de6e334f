import json

import numpy as np
import pytest

from sht_fraclap.dyadic import CellFunction, build_tree
from sht_fraclap.energy import KernelParams, apply_D2s, bilinear_form
from sht_fraclap.geometry import SierpinskiModel
from sht_fraclap.haar import HaarDecomposition, build_haar_system, haar_inverse
from sht_fraclap.solver import (
    FACTOR_CONVENTION,
    ConvergenceError,
    NotSPDError,
    _cholesky,
    assemble,
    conjugate_gradient,
    dyadic_green_closed_form,
    green_function,
    lax_milgram_solve,
    weak_solve,
)

import oracles

S = SierpinskiModel()


def system(J):
    return build_haar_system(build_tree(S, J))


def test_dyadic_gram_diagonal():
    p = assemble(system(2), KernelParams("dyadic", sigma=0.5), 1.0)
    np.testing.assert_allclose(p.gram, np.diag([1, 1, 3, 3, 3, 3, 3, 3]), atol=1e-12)


def test_metric_gram_j1_against_brute_force():
    sys = system(1)
    p = assemble(sys, KernelParams("metric", s=0.9), 1.0)
    assert p.gram.shape == (2, 2)
    assert abs(p.gram[0, 1] - p.gram[1, 0]) < 1e-12
    assert np.all(np.linalg.eigvalsh(p.gram) > 0)
    h = [list(sys.as_cell_function(i).values) for i in range(2)]
    for i in range(2):
        for k in range(2):
            assert p.gram[i, k] == pytest.approx(oracles.bilinear("sierpinski", 1, h[i], h[k], "metric", s=0.9), rel=1e-12, abs=1e-12)


def test_empty_basis_rejected():
    with pytest.raises(ValueError, match="no wavelet cube"):
        assemble(system(2), KernelParams("dyadic", sigma=0.5), 1 / 9)


def test_zero_rhs():
    p = assemble(system(3), KernelParams("metric", s=0.9), 1.0)
    sol = lax_milgram_solve(p, np.zeros(p.size))
    assert np.all(sol.coefficients == 0)


@pytest.mark.parametrize("method", ["cholesky", "cg"])
def test_dyadic_diagonal_inverse(method):
    sys = system(3)
    p = assemble(sys, KernelParams("dyadic", sigma=0.4), 1.0)
    rhs = np.random.default_rng(1).standard_normal(p.size)
    sol = lax_milgram_solve(p, rhs, method=method, tol=1e-12)
    expected = sys.wavelet_cube_measure[p.basis_index] ** 0.8 * rhs
    np.testing.assert_allclose(sol.coefficients, expected, rtol=1e-9)


def test_green_j1_pattern():
    sys = system(1)
    for sigma in (0.05, 0.5, 0.9):
        sol = green_function(assemble(sys, KernelParams("dyadic", sigma=sigma), 1.0), sys.tree.leaf_address(0))
        np.testing.assert_allclose(sol.function.values, [2, -1, -1], atol=1e-14)


def test_green_closed_form():
    sys = system(3)
    p = assemble(sys, KernelParams("dyadic", sigma=0.4), 1.0)
    for k in (0, 13, 26):
        x = sys.tree.leaf_address(k)
        g = green_function(p, x).function.values
        np.testing.assert_allclose(g, dyadic_green_closed_form(sys, x, 0.4, 1.0).values, atol=1e-10)


def test_green_far_values_from_top_wavelets():
    sys = system(3)
    x = sys.tree.leaf_address(0)
    g = dyadic_green_closed_form(sys, x, 0.4, 1.0).values
    # leaves outside x's level-1 cube see only the level-0 wavelets
    top = sys.values_at_leaf(0)[:2]
    for k in range(9, 27):
        assert g[k] == pytest.approx(top @ sys.values_at_leaf(k)[:2], abs=1e-12)


@pytest.mark.parametrize("J", [3, 4])
def test_green_reproduction_metric(J):
    sys = system(J)
    p = assemble(sys, KernelParams("metric", s=0.9), 1.0)
    rng = np.random.default_rng(J)
    for k in rng.choice(sys.tree.n_leaves, 3, replace=False):
        sol = green_function(p, sys.tree.leaf_address(int(k)))
        assert np.abs(p.gram @ sol.coefficients - sys.values_at_leaf(int(k))[p.basis_index]).max() <= 1e-8
        assert sol.residual_norm <= 1e-8


def test_green_symmetry():
    sys = system(3)
    p = assemble(sys, KernelParams("metric", s=0.9), 1.0)
    g = np.vstack([green_function(p, sys.tree.leaf_address(k)).function.values for k in range(27)])
    assert np.abs(g - g.T).max() < 1e-8


def test_green_threshold():
    p = assemble(system(2), KernelParams("metric", s=0.5), 1.0)
    with pytest.raises(ValueError, match="0.7925"):
        green_function(p, p.tree.leaf_address(0))


def test_weak_solve_constant_rhs():
    sys = system(3)
    p = assemble(sys, KernelParams("metric", s=0.6), 1.0)
    sol = weak_solve(p, CellFunction.constant(sys.tree, 1.0))
    assert np.abs(sol.function.values).max() < 1e-12


def test_weak_solve_recovers_half():
    sys = system(3)
    params = KernelParams("metric", s=0.6)
    p = assemble(sys, params, 1.0)
    c = np.random.default_rng(4).standard_normal(sys.n_wavelets)
    w = haar_inverse(sys, HaarDecomposition.from_flat(sys, 0.0, c))
    f = apply_D2s(sys.tree, w, params)
    u = weak_solve(p, f).function
    np.testing.assert_allclose(u.values, w.values / 2, atol=1e-8)
    h = sys.as_cell_function(4)
    assert bilinear_form(sys.tree, u, h, params) == pytest.approx(f.inner(h), abs=1e-9)


def test_weak_solve_dyadic_coefficients():
    sys = system(3)
    p = assemble(sys, KernelParams("dyadic", sigma=0.3), 1.0)
    f = CellFunction(sys.tree, np.random.default_rng(8).standard_normal(27))
    sol = weak_solve(p, f)
    rhs = np.array([f.inner(sys.as_cell_function(i)) for i in p.basis_index])
    np.testing.assert_allclose(sol.coefficients, sys.wavelet_cube_measure[p.basis_index] ** 0.6 * rhs, rtol=1e-10)


def test_cg_failure_carries_history():
    A = np.diag(np.arange(1.0, 51.0))
    with pytest.raises(ConvergenceError) as ei:
        conjugate_gradient(A, np.ones(50), tol=1e-14, maxiter=2)
    assert len(ei.value.history) >= 2


def test_not_spd_reports_pivot():
    with pytest.raises(NotSPDError) as ei:
        _cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert ei.value.pivot_index == 1


def test_solution_exports():
    sys = system(1)
    sol = green_function(assemble(sys, KernelParams("dyadic", sigma=0.5), 1.0), sys.tree.leaf_address(0))
    lines = sol.to_csv().splitlines()
    assert lines[0] == "leaf_address,value" and lines[1].startswith("1:1,")
    assert sol.plot_csv().splitlines()[0] == "x,y,value"
    meta = json.loads(sol.metadata_json())
    assert meta["factor_convention"] == FACTOR_CONVENTION == "B=2<Du,v>"
    assert {"mode", "sigma", "lambda", "J", "residualNorm"} <= set(meta)
