"""Galerkin / Lax-Milgram solves on the kernel of ``Pi_lambda``.

The trial and test space is the span of the wavelets on cubes of measure
``<= lambda``; the top scaling coefficient and all coarser wavelet content
are zero by construction.  In ``metric`` and ``ball`` mode the Gram matrix is
``G = 2 H L H^T`` with ``L`` from :mod:`.energy`.  In ``dyadic`` mode the form
is the Haar-diagonal one, ``G = diag(mu(Q(h))^(-2 sigma))``; pass
``dyadic_form="quadrature"`` to use the pair-sum dyadic kernel instead.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .dyadic import CellFunction, check_same_tree
from .energy import KernelParams, dyadic_energy_multipliers, laplacian_matrix
from .haar import HaarDecomposition, HaarFunction, HaarSystem, haar_forward, haar_inverse, ker_pilambda_mask

__all__ = [
    "GalerkinProblem",
    "WeakSolution",
    "NotSPDError",
    "ConvergenceError",
    "assemble",
    "lax_milgram_solve",
    "green_function",
    "dyadic_green_closed_form",
    "weak_solve",
    "conjugate_gradient",
    "DIRECT_SOLVE_LIMIT",
    "FACTOR_CONVENTION",
]

DIRECT_SOLVE_LIMIT = 2000
FACTOR_CONVENTION = "B=2<Du,v>"


class NotSPDError(np.linalg.LinAlgError):
    def __init__(self, message, pivot_index=None, pivot_value=None):
        super().__init__(message)
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value


class ConvergenceError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class GalerkinProblem:
    system: HaarSystem = field(repr=False)
    params: KernelParams
    lam: float
    basis_index: np.ndarray = field(repr=False)
    gram: np.ndarray = field(repr=False)
    dyadic_form: str = "haar"
    _factor: tuple | None = field(default=None, repr=False)

    @property
    def tree(self):
        return self.system.tree

    @property
    def size(self) -> int:
        return len(self.basis_index)

    @property
    def basis(self) -> list[HaarFunction]:
        return [self.system.wavelet(int(i)) for i in self.basis_index]

    def basis_rows(self) -> np.ndarray:
        return self.system.wavelet_rows(self.basis_index)

    def factor(self):
        if self._factor is None:
            self._factor = _cholesky(self.gram)
        return self._factor

    def reconstruct(self, coefficients) -> CellFunction:
        flat = np.zeros(self.system.n_wavelets)
        flat[self.basis_index] = coefficients
        return haar_inverse(self.system, HaarDecomposition.from_flat(self.system, 0.0, flat))

    def form(self, u: CellFunction, v: CellFunction) -> float:
        """The bilinear form the Gram matrix represents, evaluated on two functions."""
        cu = haar_forward(self.system, u).flat()
        cv = haar_forward(self.system, v).flat()
        if self.params.mode == "dyadic" and self.dyadic_form == "haar":
            w = self.system.wavelet_cube_measure ** (-2 * self.params.sigma)
            return float(np.sum(cu * cv * w))
        if self.params.mode == "dyadic":
            w = dyadic_energy_multipliers(self.system, self.params.sigma)
            return float(np.sum(cu * cv * w))
        L = laplacian_matrix(self.tree, self.params)
        return float(2.0 * u.values @ L @ v.values)


@dataclass
class WeakSolution:
    problem: GalerkinProblem = field(repr=False)
    coefficients: np.ndarray = field(repr=False)
    function: CellFunction = field(repr=False)
    residual_norm: float
    method: str

    def metadata(self, **extra) -> dict:
        p = self.problem
        meta = {
            "model": p.tree.model.name,
            "J": p.tree.J,
            "mode": p.params.mode,
            "lambda": p.lam,
            "residualNorm": self.residual_norm,
            "method": self.method,
            "basis_size": p.size,
            "factor_convention": FACTOR_CONVENTION,
        }
        if p.params.mode == "metric":
            meta["s"] = p.params.s
        else:
            meta["sigma"] = p.params.sigma
        meta.update(extra)
        return meta

    def to_csv(self) -> str:
        t = self.problem.tree
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["leaf_address", "value"])
        for k, v in enumerate(self.function.values):
            w.writerow([t.format_address(t.leaf_address(k)), repr(float(v))])
        return buf.getvalue()

    def plot_csv(self) -> str:
        t = self.problem.tree
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["x", "y"][: t.model.dim]
        w.writerow(cols + ["value"])
        for pt, v in zip(t.leaf_points, self.function.values):
            w.writerow([repr(float(c)) for c in pt] + [repr(float(v))])
        return buf.getvalue()

    def metadata_json(self, **extra) -> str:
        return json.dumps(self.metadata(**extra), indent=1, sort_keys=True)


def _cholesky(G: np.ndarray):
    try:
        return scipy.linalg.cho_factor(G, lower=True, check_finite=True)
    except np.linalg.LinAlgError:
        # locate the first nonpositive pivot for the error message
        d = np.linalg.eigvalsh(G)
        L = G.copy()
        n = len(L)
        for i in range(n):
            piv = L[i, i] - L[i, :i] @ L[i, :i]
            if piv <= 0:
                raise NotSPDError(
                    f"Gram matrix is not positive definite: pivot {i} = {piv:.3e} "
                    f"(smallest eigenvalue {d[0]:.3e})",
                    pivot_index=i,
                    pivot_value=float(piv),
                ) from None
            L[i, i] = math.sqrt(piv)
            L[i + 1 :, i] = (L[i + 1 :, i] - L[i + 1 :, :i] @ L[i, :i]) / L[i, i]
        raise


def assemble(
    system: HaarSystem,
    params: KernelParams,
    lam: float,
    dyadic_form: str = "haar",
) -> GalerkinProblem:
    """Gram matrix of the form on ``span(ker_pilambda_basis(lam))``."""
    t = system.tree
    params.check_model(t.model)
    if dyadic_form not in ("haar", "quadrature"):
        raise ValueError(f"dyadic_form must be 'haar' or 'quadrature', got {dyadic_form!r}")
    idx = np.flatnonzero(ker_pilambda_mask(system, lam))
    if len(idx) == 0:
        raise ValueError(
            f"no wavelet cube has measure <= lambda={lam}; the smallest wavelet cube measure is "
            f"{system.wavelet_cube_measure.min() if system.n_wavelets else 'undefined (J=0)'}"
        )
    if params.mode == "dyadic" and dyadic_form == "haar":
        G = np.diag(system.wavelet_cube_measure[idx] ** (-2 * params.sigma))
    elif params.mode == "dyadic":
        G = np.diag(dyadic_energy_multipliers(system, params.sigma)[idx])
    else:
        H = system.wavelet_rows(idx)
        L = laplacian_matrix(t, params)
        G = 2.0 * (H @ L @ H.T)
        G = 0.5 * (G + G.T)
    prob = GalerkinProblem(system, params, lam, idx, G, dyadic_form)
    prob.factor()
    return prob


def conjugate_gradient(A: np.ndarray, b: np.ndarray, x0=None, tol: float = 1e-12, maxiter: int | None = None):
    """Plain CG for SPD ``A``; returns ``(x, residual_history)``."""
    n = len(b)
    maxiter = 10 * n if maxiter is None else maxiter
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    p = r.copy()
    rs = r @ r
    bnorm = max(np.linalg.norm(b), 1e-300)
    history = [math.sqrt(rs)]
    for _ in range(maxiter):
        if math.sqrt(rs) <= tol * bnorm:
            return x, history
        Ap = A @ p
        alpha = rs / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rs_new = r @ r
        history.append(math.sqrt(rs_new))
        p = r + (rs_new / rs) * p
        rs = rs_new
    if math.sqrt(rs) <= tol * bnorm:
        return x, history
    raise ConvergenceError(f"CG did not converge in {maxiter} iterations", history)


def lax_milgram_solve(
    p: GalerkinProblem,
    rhs,
    method: str = "auto",
    x0=None,
    tol: float = 1e-8,
    maxiter: int | None = None,
) -> WeakSolution:
    """Solve ``G c = rhs`` and wrap the result.

    ``method`` is ``"cholesky"``, ``"cg"`` or ``"auto"`` (direct up to
    :data:`DIRECT_SOLVE_LIMIT` unknowns).  ``tol`` bounds the returned
    residual ``max_v |B(u, v) - rhs(v)|``.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (p.size,):
        raise ValueError(f"rhs must have length {p.size}, got shape {rhs.shape}")
    if method == "auto":
        method = "cholesky" if p.size <= DIRECT_SOLVE_LIMIT else "cg"
    if method == "cholesky":
        c = scipy.linalg.cho_solve(p.factor(), rhs)
    elif method == "cg":
        c, _ = conjugate_gradient(p.gram, rhs, x0=x0, tol=min(1e-13, tol), maxiter=maxiter)
    else:
        raise ValueError(f"unknown method {method!r}")
    resid = float(np.max(np.abs(p.gram @ c - rhs))) if p.size else 0.0
    if resid > tol:
        # one step of iterative refinement
        c = c + scipy.linalg.cho_solve(p.factor(), rhs - p.gram @ c)
        resid = float(np.max(np.abs(p.gram @ c - rhs)))
        if resid > tol:
            raise ConvergenceError(f"residual {resid:.3e} above tolerance {tol:.1e}", [resid])
    return WeakSolution(p, c, p.reconstruct(c), resid, method)


def _gamma_half(model) -> float:
    return model.gamma / 2


def green_function(p: GalerkinProblem, x, method: str = "auto", tol: float = 1e-8) -> WeakSolution:
    """``G(x, .)`` with ``B(G(x, .), v) = v(x)`` for every basis ``v``."""
    t = p.tree
    if p.params.mode == "metric" and not p.params.s > _gamma_half(t.model):
        raise ValueError(
            f"point evaluation needs s > gamma/2 = {_gamma_half(t.model):.4f}; got s={p.params.s}"
        )
    k = t.leaf_index(x)
    rhs = p.system.values_at_leaf(k)[p.basis_index]
    return lax_milgram_solve(p, rhs, method=method, tol=tol)


def dyadic_green_closed_form(sys: HaarSystem, x, sigma: float, lam: float) -> CellFunction:
    """``sum_h mu(Q(h))^(2 sigma) h(x) h(.)`` over the wavelets of ``Ker Pi_lam``."""
    if not 0 < sigma < 1:
        raise ValueError("sigma must lie in (0, 1)")
    t = sys.tree
    k = t.leaf_index(x)
    mask = ker_pilambda_mask(sys, lam)
    hx = sys.values_at_leaf(k)
    flat = np.where(mask, sys.wavelet_cube_measure ** (2 * sigma) * hx, 0.0)
    return haar_inverse(sys, HaarDecomposition.from_flat(sys, 0.0, flat))


def weak_solve(p: GalerkinProblem, f: CellFunction, method: str = "auto", tol: float = 1e-8) -> WeakSolution:
    """Solve ``B(u, h) = <f, h>`` for every basis wavelet ``h``."""
    check_same_tree(f, p.tree)
    rhs = haar_forward(p.system, f).flat()[p.basis_index]
    return lax_milgram_solve(p, rhs, method=method, tol=tol)
