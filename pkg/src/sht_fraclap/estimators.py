"""scikit-learn style wrappers.

Rows of ``X`` are cell functions: one value per leaf cell of the tree built
at ``fit`` time, in leaf-index order.

>>> from sht_fraclap.estimators import HaarTransformer
>>> import numpy as np
>>> ht = HaarTransformer(model="sierpinski", J=2).fit()
>>> ht.transform(np.ones((1, 9)))[0, :3].round(12)
array([1., 0., 0.])
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import _validation as v
from .dyadic import CellFunction, build_tree
from .energy import energy_haar, energy_haar_exact, energy_quadrature
from .haar import HaarDecomposition, build_haar_system, haar_forward, haar_inverse
from .solver import assemble, green_function, weak_solve

__all__ = ["HaarTransformer", "DyadicEnergy", "GreenSolver"]


class _TreeMixin:
    def _build(self):
        model = v.check_model(self.model)
        if self.m0 != 0:
            model = type(model)(m0=self.m0)
        J = v.check_level(self.J)
        self.tree_ = build_tree(model, J)
        self.system_ = build_haar_system(self.tree_)
        self.n_features_in_ = self.tree_.n_leaves


class HaarTransformer(_TreeMixin, TransformerMixin, BaseEstimator):
    """Haar analysis of cell functions.

    ``transform`` returns ``[top_scaling_coeff, wavelet coeffs...]`` per row,
    wavelets in level-major order; ``inverse_transform`` undoes it.
    """

    def __init__(self, model="sierpinski", J=4, m0=0):
        self.model = model
        self.J = J
        self.m0 = m0

    def fit(self, X=None, y=None):
        self._build()
        if X is not None:
            v.check_cell_values(X, self.tree_)
        return self

    def transform(self, X):
        check_is_fitted(self, "system_")
        X = v.check_cell_values(X, self.tree_)
        out = np.empty_like(X)
        for i, row in enumerate(X):
            d = haar_forward(self.system_, CellFunction(self.tree_, row))
            out[i, 0] = d.top
            out[i, 1:] = d.flat()
        return out

    def inverse_transform(self, C):
        check_is_fitted(self, "system_")
        C = v.check_cell_values(C, self.tree_)
        out = np.empty_like(C)
        for i, row in enumerate(C):
            d = HaarDecomposition.from_flat(self.system_, row[0], row[1:])
            out[i] = haar_inverse(self.system_, d).values
        return out

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "system_")
        names = ["scaling"]
        for h in self.system_.wavelets():
            names.append(f"h[{self.tree_.format_address(h.cube)}#{h.l}]")
        return np.array(names, dtype=object)


class DyadicEnergy(_TreeMixin, BaseEstimator):
    """Energy of cell functions under one kernel.

    ``via="haar"`` reads the dyadic energy off the Haar coefficients exactly;
    ``via="haar-series"`` is the plain ``sum <f,h>^2 mu(Q)^(-2 sigma)``,
    which is only comparable to it.
    """

    def __init__(self, model="sierpinski", J=4, m0=0, mode="dyadic", s=None, sigma=0.5, via="quadrature", workers=1):
        self.model = model
        self.J = J
        self.m0 = m0
        self.mode = mode
        self.s = s
        self.sigma = sigma
        self.via = via
        self.workers = workers

    def fit(self, X=None, y=None):
        self._build()
        self.params_ = v.check_kernel_params(self.mode, self.s, self.sigma, self.tree_.model)
        if self.via not in ("quadrature", "haar", "haar-series"):
            raise ValueError(f"via must be 'quadrature', 'haar' or 'haar-series', got {self.via!r}")
        if self.via != "quadrature" and self.mode != "dyadic":
            raise ValueError("Haar-side energies are only available in dyadic mode")
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        X = v.check_cell_values(X, self.tree_)
        out = np.empty(len(X))
        for i, row in enumerate(X):
            f = CellFunction(self.tree_, row)
            if self.via == "haar":
                out[i] = energy_haar_exact(self.system_, f, self.params_.sigma)
            elif self.via == "haar-series":
                out[i] = energy_haar(self.system_, f, self.params_.sigma)
            else:
                out[i] = energy_quadrature(self.tree_, f, self.params_, workers=self.workers)
        return out

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)


class GreenSolver(_TreeMixin, BaseEstimator):
    """Weak solutions of ``B(u, v) = <f, v>`` on the kernel of ``Pi_lambda``.

    ``fit`` assembles and factors the Gram matrix; ``predict`` maps right-hand
    sides ``f`` (rows of ``X``) to solutions ``u``; ``green`` returns the
    Green function of a leaf.
    """

    def __init__(self, model="sierpinski", J=3, m0=0, mode="metric", s=0.9, sigma=None, lam=1.0, method="auto", tol=1e-8):
        self.model = model
        self.J = J
        self.m0 = m0
        self.mode = mode
        self.s = s
        self.sigma = sigma
        self.lam = lam
        self.method = method
        self.tol = tol

    def fit(self, X=None, y=None):
        self._build()
        params = v.check_kernel_params(self.mode, self.s, self.sigma, self.tree_.model)
        self.problem_ = assemble(self.system_, params, v.check_positive(self.lam, "lam"))
        return self

    def predict(self, X):
        check_is_fitted(self, "problem_")
        X = v.check_cell_values(X, self.tree_)
        sols = [
            weak_solve(self.problem_, CellFunction(self.tree_, row), method=self.method, tol=self.tol)
            for row in X
        ]
        self.residuals_ = np.array([s.residual_norm for s in sols])
        return np.vstack([s.function.values for s in sols])

    def green(self, x):
        check_is_fitted(self, "problem_")
        if isinstance(x, str):
            x = self.tree_.parse_address(x)
        elif isinstance(x, (int, np.integer)):
            x = self.tree_.leaf_address(int(x))
        return green_function(self.problem_, x, method=self.method, tol=self.tol).function.values
