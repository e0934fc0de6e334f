"""Nonlocal energies, the bilinear form and the operator ``D^{2s}``.

All pair sums run over ordered pairs of distinct leaf cells with one
quadrature node per cell (its representative point).  Kernels:

``metric``  ``d(a, b) ** -(gamma + 2 s)`` on Ahlfors models
``dyadic``  ``delta(a, b) ** -(1 + 2 sigma)``
``ball``    ``mu(B(a, d(a, b))) ** -(1 + 2 sigma)``, symmetrized

With ``W = diag(mu) K diag(mu)`` and ``L = diag(W 1) - W`` one has
``B(u, v) = 2 u.L.v`` and ``<D u, v> = u.L.v``, so ``B = 2 <D u, v>``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .dyadic import CellFunction, DyadicTree, build_tree, check_same_tree, sample_distinct_pairs
from .haar import HaarDecomposition, HaarSystem, haar_forward, ker_pilambda_mask

__all__ = [
    "KernelParams",
    "EnergyReport",
    "kernel_matrix",
    "energy_quadrature",
    "energy_haar",
    "energy_haar_exact",
    "energy_report",
    "dyadic_energy_multipliers",
    "bilinear_form",
    "apply_D2s",
    "coercivity_check",
    "metric_dyadic_constant",
    "lemma1_ratios",
    "holder_seminorm",
    "lipschitz_energy_growth",
    "ball_kernel_measures",
]

MODES = ("metric", "dyadic", "ball")


@dataclass(frozen=True)
class KernelParams:
    """Kernel choice.  ``s`` is used in metric mode, ``sigma`` otherwise."""

    mode: str
    s: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown kernel mode {self.mode!r}; choose from {MODES}")
        if self.mode == "metric":
            if self.s is None or not 0 < self.s < 1:
                raise ValueError(f"metric mode needs 0 < s < 1, got s={self.s!r}")
        else:
            if self.sigma is None or not 0 < self.sigma < 1:
                raise ValueError(f"{self.mode} mode needs 0 < sigma < 1, got sigma={self.sigma!r}")

    def check_model(self, model) -> None:
        if self.mode == "metric" and model.gamma is None:
            raise ValueError(f"metric mode needs an Ahlfors model; {model.name!r} has no gamma")

    def effective_sigma(self, model) -> float:
        """``sigma`` of the energy; ``s / gamma`` in metric mode."""
        if self.mode == "metric":
            self.check_model(model)
            return self.s / model.gamma
        return self.sigma

    def as_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass(frozen=True)
class EnergyReport:
    energy: float
    l2_norm_sq: float

    @property
    def sobolev_norm(self) -> float:
        return math.sqrt(self.l2_norm_sq) + math.sqrt(self.energy)


def ball_kernel_measures(t: DyadicTree) -> np.ndarray:
    """``mu(B(a, d(a, b)))`` for all leaf pairs (own cell always included)."""

    def build():
        D = t.leaf_distances()
        mu = t.leaf_measures
        N = t.n_leaves
        out = np.empty((N, N))
        for a in range(N):
            order = np.argsort(D[a], kind="stable")
            dist = D[a][order]
            cum = np.cumsum(mu[order])
            # open ball: cells strictly closer than d(a, b), plus a itself
            first = np.searchsorted(dist, dist, side="left")
            m = np.where(first > 0, cum[np.maximum(first - 1, 0)], 0.0)
            m = np.maximum(m, mu[a])
            out[a, order] = m
        out.setflags(write=False)
        return out

    return t._cached("ball_measures", build)


def kernel_matrix(t: DyadicTree, p: KernelParams) -> np.ndarray:
    """Symmetric pair kernel with zero diagonal (cached on the tree)."""
    p.check_model(t.model)

    def build():
        if p.mode == "metric":
            D = t.leaf_distances()
            expo = -(t.model.gamma + 2 * p.s)
        elif p.mode == "dyadic":
            D = t.delta_matrix()
            expo = -(1 + 2 * p.sigma)
        else:
            D = ball_kernel_measures(t)
            expo = -(1 + 2 * p.sigma)
        K = np.zeros_like(D)
        off = ~np.eye(t.n_leaves, dtype=bool)
        K[off] = D[off] ** expo
        if p.mode == "ball":
            K = 0.5 * (K + K.T)
        K.setflags(write=False)
        return K

    return t._cached(("kernel", p), build)


def _row_blocks(n: int, workers: int) -> list[tuple[int, int]]:
    workers = max(1, int(workers))
    edges = np.linspace(0, n, workers + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _pair_sum(t: DyadicTree, K: np.ndarray, u: np.ndarray, v: np.ndarray, workers: int) -> float:
    mu = t.leaf_measures

    def block(rng):
        a0, a1 = rng
        du = u[a0:a1, None] - u[None, :]
        dv = v[a0:a1, None] - v[None, :]
        return float(np.sum(du * dv * K[a0:a1] * mu[a0:a1, None] * mu[None, :]))

    blocks = _row_blocks(t.n_leaves, workers)
    if len(blocks) == 1:
        parts = [block(blocks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(blocks)) as ex:
            parts = list(ex.map(block, blocks))
    # fixed block order keeps the reduction reproducible for a worker count
    total = 0.0
    for x in parts:
        total += x
    return total


def energy_quadrature(t: DyadicTree, f: CellFunction, p: KernelParams, workers: int = 1) -> float:
    check_same_tree(f, t)
    K = kernel_matrix(t, p)
    return _pair_sum(t, K, f.values, f.values, workers)


def bilinear_form(t: DyadicTree, u: CellFunction, v: CellFunction, p: KernelParams, workers: int = 1) -> float:
    check_same_tree(u, t)
    check_same_tree(v, t)
    K = kernel_matrix(t, p)
    return _pair_sum(t, K, u.values, v.values, workers)


def laplacian_matrix(t: DyadicTree, p: KernelParams) -> np.ndarray:
    """``L`` with ``B(u, v) = 2 u.L.v``."""

    def build():
        K = kernel_matrix(t, p)
        mu = t.leaf_measures
        W = K * mu[:, None] * mu[None, :]
        L = np.diag(W.sum(axis=1)) - W
        L.setflags(write=False)
        return L

    return t._cached(("laplacian", p), build)


def apply_D2s(t: DyadicTree, u: CellFunction, p: KernelParams) -> CellFunction:
    """``(D u)_a = sum_{b != a} (u_a - u_b) K(a, b) mu_b``."""
    check_same_tree(u, t)
    K = kernel_matrix(t, p)
    mu = t.leaf_measures
    x = u.values
    # difference form keeps constants exactly in the kernel
    return CellFunction(t, np.sum((x[:, None] - x[None, :]) * K * mu[None, :], axis=1))


def energy_haar(sys: HaarSystem, f, sigma: float) -> float:
    """Haar-coefficient series ``sum_h <f,h>^2 mu(Q(h))^(-2 sigma)``.

    ``f`` may be a cell function or a decomposition; the top scaling
    coefficient does not enter.
    """
    if not 0 < sigma < 1:
        raise ValueError("sigma must lie in (0, 1)")
    d = f if isinstance(f, HaarDecomposition) else haar_forward(sys, f)
    c = d.flat()
    return float(np.sum(c**2 * sys.wavelet_cube_measure ** (-2 * sigma)))


def dyadic_energy_multipliers(sys: HaarSystem, sigma: float) -> np.ndarray:
    """Exact eigenvalue of the truncated dyadic-kernel form on each wavelet.

    The dyadic kernel depends only on the smallest common cube, so every
    wavelet is an eigenfunction and ``B(h, h) = 2 (mu(Q) k(Q) + ext(Q))`` with
    ``k(A) = mu(A)^(-1-2 sigma)`` and ``ext(Q)`` the sum over strict
    ancestors ``A`` of ``(mu(A) - mu(A')) k(A)``, ``A'`` the child of ``A``
    containing ``Q``.
    """
    t, b = sys.tree, sys.branching
    expo = -(1 + 2 * sigma)
    out = np.empty(sys.n_wavelets)
    ext = np.zeros(1)
    for j in range(t.J):
        mu_j = t.measures[j]
        lam = 2 * (mu_j * mu_j**expo + ext)
        out[sys.offsets[j] : sys.offsets[j + 1]] = np.repeat(lam, b - 1)
        mu_child = t.measures[j + 1]
        ext = np.repeat(ext, b) + (np.repeat(mu_j, b) - mu_child) * np.repeat(mu_j**expo, b)
    return out


def energy_haar_exact(sys: HaarSystem, f, sigma: float) -> float:
    """Dyadic-kernel energy read off the Haar coefficients: ``sum_h <f,h>^2 m(h)``.

    ``m`` are the eigenvalues from :func:`dyadic_energy_multipliers`, so the
    result agrees with ``energy_quadrature`` in dyadic mode.
    """
    if not 0 < sigma < 1:
        raise ValueError("sigma must lie in (0, 1)")
    d = f if isinstance(f, HaarDecomposition) else haar_forward(sys, f)
    c = d.flat()
    return float(np.sum(c**2 * dyadic_energy_multipliers(sys, sigma)))


def energy_report(t: DyadicTree, f: CellFunction, p: KernelParams, workers: int = 1) -> EnergyReport:
    return EnergyReport(energy=energy_quadrature(t, f, p, workers), l2_norm_sq=f.l2_norm_sq())


def coercivity_check(
    sys: HaarSystem,
    f: CellFunction,
    lam: float,
    sigma: float,
    metric_s: float | None = None,
    tol: float = 1e-10,
) -> dict:
    """Check ``E_delta(f) >= lam^(-2 sigma) ||f||^2`` on the kernel of ``Pi_lam``.

    ``f`` must have no top scaling content and no wavelet content on cubes
    of measure ``> lam`` (up to ``tol`` relative to its norm); otherwise a
    ``ValueError`` lists the offending coefficients.  Both sides are summed
    term by term over the surviving coefficients in the same order, so the
    inequality is checked without slack.
    """
    d = haar_forward(sys, f)
    c = d.flat()
    scale = max(math.sqrt(f.l2_norm_sq()), 1.0e-300)
    keep = ker_pilambda_mask(sys, lam)
    bad = [(int(i), float(c[i])) for i in np.flatnonzero(~keep) if abs(c[i]) > tol * scale]
    if abs(d.top) > tol * scale:
        bad.insert(0, ("top", d.top))
    if bad:
        shown = ", ".join(
            f"{'top scaling' if i == 'top' else str(sys.wavelet(i).id)}={v:.3g}" for i, v in bad[:10]
        )
        raise ValueError(f"function is not in Ker Pi_lambda (lambda={lam}): offending coefficients {shown}")
    ck = c[keep] ** 2
    weights = sys.wavelet_cube_measure[keep] ** (-2 * sigma)
    bound_factor = lam ** (-2 * sigma)
    energy = 0.0
    bound = 0.0
    for a, w in zip(ck, weights):
        energy += a * w
        bound += a * bound_factor
    report = {
        "lambda": lam,
        "sigma": sigma,
        "energy": energy,
        "bound": bound,
        "constant": 1.0,
        "l2_norm_sq": f.l2_norm_sq(),
        "pass": bool(energy >= bound),
    }
    if metric_s is not None:
        t = sys.tree
        em = energy_quadrature(t, f, KernelParams("metric", s=metric_s))
        ed = energy_quadrature(t, f, KernelParams("dyadic", sigma=metric_s / t.model.gamma))
        nrm = f.l2_norm_sq()
        report["metric_energy"] = em
        report["metric_over_l2"] = em / nrm if nrm > 0 else math.nan
        report["metric_over_dyadic"] = em / ed if ed > 0 else math.nan
    return report


def metric_dyadic_constant(t: DyadicTree, functions, s: float) -> float:
    """Smallest ratio ``E_d / E_delta`` over a suite, with ``sigma = s / gamma``."""
    pm = KernelParams("metric", s=s)
    pd = KernelParams("dyadic", sigma=s / t.model.gamma)
    ratios = []
    for f in functions:
        ed = energy_quadrature(t, f, pd)
        if ed > 0:
            ratios.append(energy_quadrature(t, f, pm) / ed)
    return float(min(ratios))


def lemma1_ratios(t: DyadicTree, x, s: float, radii) -> list[dict]:
    """Local and tail integrals of powers of ``d`` about leaf ``x``, rescaled.

    ``ratio_local = sum_{0 < d < r} d^-(gamma-s) mu / r^s`` and
    ``ratio_tail = sum_{d >= r} d^-(gamma+s) mu * r^s``.  The cell of ``x`` is
    left out and the tail stops at the window edge.
    """
    model = t.model
    if model.gamma is None:
        raise ValueError(f"model {model.name!r} has no Ahlfors exponent")
    if s < 0:
        raise ValueError("s must be nonnegative")
    g = model.gamma
    k = t.leaf_index(x)
    d = np.delete(t.leaf_distances()[k], k)
    mu = np.delete(t.leaf_measures, k)
    lo, hi = model.cell_diameter(t.J), model.cell_diameter(0)
    out = []
    for r in radii:
        if not lo <= r <= hi:
            raise ValueError(f"radius {r} outside the resolvable range [{lo}, {hi}]")
        near = d < r
        local = float(np.sum(d[near] ** (-(g - s)) * mu[near]))
        tail = float(np.sum(d[~near] ** (-(g + s)) * mu[~near]))
        out.append(
            {
                "r": float(r),
                "ratio_local": local / r**s,
                "ratio_tail": tail * r**s,
                "window_radius": hi,
            }
        )
    return out


def holder_seminorm(
    t: DyadicTree, f: CellFunction, beta: float, n_samples: int | None = None, seed: int = 0
) -> float:
    """Largest ``|f_a - f_b| / d(a, b)^beta`` over distinct leaf pairs.

    All pairs are used when ``n_samples`` is ``None``; otherwise a seeded
    random sample of pairs.
    """
    check_same_tree(f, t)
    if beta <= 0:
        raise ValueError("beta must be positive")
    D = t.leaf_distances()
    v = f.values
    if n_samples is None:
        iu = np.triu_indices(t.n_leaves, k=1)
        a, b = iu
    else:
        a, b = sample_distinct_pairs(t.n_leaves, n_samples, np.random.default_rng(seed))
    return float(np.max(np.abs(v[a] - v[b]) / D[a, b] ** beta)) if len(a) else 0.0


def holder_bump(t: DyadicTree, beta: float, center=None, radius: float | None = None) -> CellFunction:
    """``clamp(1 - d(x, c)/R, 0, 1)**beta`` at the leaf representative points."""
    pts = t.leaf_points
    if center is None:
        center = t.points[0][0]
    if radius is None:
        radius = 0.5 * t.model.cell_diameter(0)
    d = np.sqrt(np.sum((pts - np.asarray(center, dtype=float)) ** 2, axis=1))
    return CellFunction(t, np.clip(1.0 - d / radius, 0.0, 1.0) ** beta)


def lipschitz_energy_growth(
    t: DyadicTree, beta: float, s: float, center=None, radius: float | None = None, growth_cap: float = 0.25
) -> dict:
    """Energy of a compactly supported Hoelder bump at levels ``J`` and ``J + 2``."""
    if t.model.gamma is None:
        raise ValueError(f"model {t.model.name!r} has no Ahlfors exponent")
    if not 0 < s < beta <= 1:
        raise ValueError(f"need 0 < s < beta <= 1, got s={s}, beta={beta}")
    p = KernelParams("metric", s=s)
    t2 = build_tree(t.model, t.J + 2)
    e1 = energy_quadrature(t, holder_bump(t, beta, center, radius), p)
    e2 = energy_quadrature(t2, holder_bump(t2, beta, center, radius), p)
    degenerate = e1 == 0.0 and e2 == 0.0
    growth = (e2 - e1) / e1 if e1 > 0 else (0.0 if degenerate else math.inf)
    return {
        "beta": beta,
        "s": s,
        "J": t.J,
        "energy_J": e1,
        "energy_J_plus_2": e2,
        "relative_growth": growth,
        "degenerate": degenerate,
        "pass": bool(degenerate or growth < growth_cap),
    }
