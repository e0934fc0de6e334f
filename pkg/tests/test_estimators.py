import doctest

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

import sht_fraclap.estimators
import sht_fraclap.geometry
from sht_fraclap.estimators import DyadicEnergy, GreenSolver, HaarTransformer


@pytest.mark.parametrize("mod", [sht_fraclap.estimators, sht_fraclap.geometry])
def test_doctests(mod):
    assert doctest.testmod(mod).failed == 0


def test_params_and_clone():
    ht = HaarTransformer(model="halfline", J=5)
    assert ht.get_params() == {"model": "halfline", "J": 5, "m0": 0}
    c = clone(ht).set_params(J=3)
    assert c.J == 3 and ht.J == 5


def test_haar_transformer_round_trip():
    X = np.random.default_rng(0).standard_normal((4, 81))
    ht = HaarTransformer(J=4).fit(X)
    C = ht.transform(X)
    assert C.shape == (4, 81)
    np.testing.assert_allclose(ht.inverse_transform(C), X, atol=1e-12)
    np.testing.assert_allclose((C**2).sum(1), (X**2 / 81).sum(1), rtol=1e-12)
    assert ht.get_feature_names_out()[0] == "scaling"


def test_not_fitted_and_bad_shape():
    with pytest.raises(NotFittedError):
        HaarTransformer().transform(np.ones((1, 81)))
    ht = HaarTransformer(J=2).fit()
    with pytest.raises(ValueError):
        ht.transform(np.ones((1, 10)))
    with pytest.raises(ValueError):
        HaarTransformer(model="torus").fit()


def test_energy_estimator_vias_agree():
    X = np.random.default_rng(1).standard_normal((3, 27))
    q = DyadicEnergy(J=3, sigma=0.4).fit_transform(X)
    h = DyadicEnergy(J=3, sigma=0.4, via="haar").fit_transform(X)
    np.testing.assert_allclose(q, h, rtol=1e-10)
    with pytest.raises(ValueError):
        DyadicEnergy(J=3, mode="metric", s=0.5, via="haar").fit()


def test_green_solver_pipeline():
    gs = GreenSolver(J=3, mode="metric", s=0.9)
    pipe = make_pipeline(gs)
    X = np.random.default_rng(2).standard_normal((2, 27))
    U = pipe.fit(X).predict(X)
    assert U.shape == (2, 27)
    assert np.all(gs.residuals_ <= 1e-8)
    g = gs.green("3:111")
    np.testing.assert_allclose(g, gs.green(0))
