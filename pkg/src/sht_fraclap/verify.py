"""Verification suites: each returns a JSON-ready report.

A report holds a list of ``assertions`` (name, pass flag, measured values)
and an overall ``pass`` flag.  Quantities that are only meaningful as
numbers (empirical constants) are reported next to the assertions that use
them.
"""
from __future__ import annotations

import math

import numpy as np

from .dyadic import CellFunction, build_tree, compare_measure_ball_delta, verify_christ_properties
from .energy import (
    KernelParams,
    apply_D2s,
    bilinear_form,
    coercivity_check,
    dyadic_energy_multipliers,
    energy_haar,
    energy_quadrature,
    lemma1_ratios,
    metric_dyadic_constant,
)
from .haar import (
    HaarDecomposition,
    build_haar_system,
    haar_forward,
    haar_inverse,
    ker_pilambda_mask,
    sierpinski_reference_wavelets,
    span_residual,
)
from .geometry import SierpinskiModel

SUITES = (
    "christ",
    "ultrametric",
    "lemma1",
    "lemma2",
    "haar",
    "energy-equivalence",
    "coercivity",
    "duality",
)

RATIO_RADII = (2.0**-1, 2.0**-2, 2.0**-3, 2.0**-4)


def _assertion(name: str, ok: bool, **measured) -> dict:
    return {"name": name, "pass": bool(ok), **{k: _jsonable(v) for k, v in measured.items()}}


def _jsonable(x):
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    return x


def _report(suite: str, assertions: list[dict], **info) -> dict:
    return {
        "suite": suite,
        "assertions": assertions,
        **{k: _jsonable(v) for k, v in info.items()},
        "pass": all(a["pass"] for a in assertions),
    }


def random_cell_functions(tree, n: int, seed: int) -> list[CellFunction]:
    """A mixed suite: iid noise, single-level Haar content, smooth waves, decaying spectra."""
    rng = np.random.default_rng(seed)
    sys = build_haar_system(tree)
    pts = tree.leaf_points
    out = []
    for i in range(n):
        kind = i % 4
        if kind == 0 or sys.n_wavelets == 0:
            vals = rng.standard_normal(tree.n_leaves)
        elif kind == 1:
            c = np.zeros(sys.n_wavelets)
            j = int(rng.integers(0, tree.J))
            lo, hi = sys.offsets[j], sys.offsets[j + 1]
            c[lo:hi] = rng.standard_normal(hi - lo)
            vals = haar_inverse(sys, HaarDecomposition.from_flat(sys, 0.0, c)).values
        elif kind == 2:
            w = rng.standard_normal(pts.shape[1])
            vals = np.sin(3.0 * pts @ w + rng.uniform(0, 2 * np.pi))
        else:
            c = rng.standard_normal(sys.n_wavelets) * sys.wavelet_cube_measure ** rng.uniform(0, 1)
            vals = haar_inverse(sys, HaarDecomposition.from_flat(sys, rng.standard_normal(), c)).values
        out.append(CellFunction(tree, vals))
    return out


def kernel_space_functions(sys, lam: float, n: int, seed: int) -> list[CellFunction]:
    """Random functions in the span of the wavelets of ``Ker Pi_lam``."""
    rng = np.random.default_rng(seed)
    mask = ker_pilambda_mask(sys, lam)
    out = []
    for _ in range(n):
        c = np.where(mask, rng.standard_normal(sys.n_wavelets), 0.0)
        out.append(haar_inverse(sys, HaarDecomposition.from_flat(sys, 0.0, c)))
    return out


# -- suites ----------------------------------------------------------------


def suite_christ(model, J: int, **_) -> dict:
    t = build_tree(model, J)
    rep = verify_christ_properties(t)
    lo, hi = rep["diameter_band"]
    checks = [_assertion(f"structural:{k}", v) for k, v in rep["structural"].items() if isinstance(v, bool)]
    checks.append(_assertion("diameter_band_level_independent", 0 < lo <= hi < math.inf and hi / lo <= 2.0, band=[lo, hi]))
    return _report("christ", checks, model=model.name, J=J, levels=rep["levels"], D8=rep["structural"]["D8_quadrant"])


def suite_ultrametric(model, J: int, seed: int = 0, n_triples: int = 10_000, **_) -> dict:
    t = build_tree(model, J)
    rng = np.random.default_rng(seed)
    Dl = t.delta_matrix()
    N = t.n_leaves
    x, y, z = (rng.integers(0, N, size=n_triples) for _ in range(3))
    ultra = bool(np.all(Dl[x, z] <= np.maximum(Dl[x, y], Dl[y, z])))
    checks = [_assertion("ultrametric_inequality", ultra, triples=n_triples)]

    # delta-balls are the largest ancestor cubes of measure < r
    ball_ok = True
    c_min = math.inf
    top = t.measures[0][0]
    leaf_min = t.leaf_measures.min()
    for k in range(N):
        anc = [t.measures[j][k // t.branching ** (J - j)] for j in range(J + 1)]
        radii = sorted(set(anc) | {0.5 * (anc[j] + anc[j + 1]) for j in range(J)} | {top * 1.5})
        for r in radii:
            members = np.flatnonzero((Dl[k] < r) | (np.arange(N) == k))
            levels = [j for j in range(J + 1) if anc[j] < r]
            jr = min(levels) if levels else None
            if jr is None:
                ball_ok &= len(members) == 1  # only x itself (a null set in the continuum)
                continue
            sl = t.leaves_of(jr, k // t.branching ** (J - jr))
            expected = np.arange(sl.start, sl.stop)
            ball_ok &= bool(np.array_equal(members, expected))
            m = float(t.leaf_measures[members].sum())
            if leaf_min < r <= top:
                c_min = min(c_min, m / r)
                ball_ok &= m < r
    checks.append(_assertion("delta_ball_is_largest_cube", ball_ok))
    checks.append(_assertion("one_regular_lower_constant_positive", c_min > 0, c=c_min))
    return _report("ultrametric", checks, model=model.name, J=J)


def suite_power_integrals(model, J: int, s: float, **_) -> dict:
    if model.gamma is None:
        raise ValueError("lemma1 needs an Ahlfors model (use --model sierpinski)")
    t = build_tree(model, J)
    t2 = build_tree(model, J + 2)
    x = t.leaf_address(0)
    x2 = t2.leaf_address(0)
    checks = []
    rows = lemma1_ratios(t, x, s, RATIO_RADII)
    rows2 = lemma1_ratios(t2, x2, s, RATIO_RADII)
    growth = rows2[-1]["ratio_local"] / rows[-1]["ratio_local"] - 1.0
    if s > 0:
        local = [r["ratio_local"] for r in rows]
        tail = [r["ratio_tail"] for r in rows]
        checks.append(_assertion("local_ratio_bounded", max(local) / min(local) < 10, spread=max(local) / min(local)))
        checks.append(_assertion("tail_ratio_bounded", max(tail) / min(tail) < 10, spread=max(tail) / min(tail)))
    else:
        checks.append(
            _assertion(
                "local_integral_finite_under_refinement",
                growth <= 0.5,
                growth=growth,
                divergence_detected=growth > 0.5,
                radius=RATIO_RADII[-1],
            )
        )
    return _report(
        "lemma1", checks, model=model.name, J=J, s=s, ratios=rows, ratios_refined=rows2, local_growth=growth
    )


def suite_ball_delta(model, J: int, seed: int = 0, n_samples: int = 10_000, **_) -> dict:
    c1 = compare_measure_ball_delta(build_tree(model, J), n_samples, seed)
    c2 = compare_measure_ball_delta(build_tree(model, J + 1), n_samples, seed)
    checks = [
        _assertion("ball_delta_constant_finite", math.isfinite(c1) and math.isfinite(c2), C_J=c1, C_J_plus_1=c2),
        _assertion("ball_delta_constant_stable", 0.5 <= c2 / c1 <= 2.0, drift=c2 / c1),
    ]
    return _report("lemma2", checks, model=model.name, J=J, C=c1)


def suite_haar(model, J: int, seed: int = 0, tol_orthonormality: float = 1e-12, tol_parseval: float = 1e-10, **_) -> dict:
    t = build_tree(model, J)
    sys = build_haar_system(t)
    rng = np.random.default_rng(seed)
    mu = t.leaf_measures
    if J <= 4:
        rows = np.vstack([sys.top_scaling_function().values, sys.wavelet_matrix()])
    else:
        pick = rng.choice(sys.n_wavelets, size=min(200, sys.n_wavelets), replace=False)
        rows = np.vstack([sys.top_scaling_function().values, sys.wavelet_rows(pick)])
    G = (rows * mu) @ rows.T
    orth = float(np.max(np.abs(G - np.eye(len(G)))))
    pars, rt = 0.0, 0.0
    for _ in range(100):
        f = CellFunction(t, rng.standard_normal(t.n_leaves))
        d = haar_forward(sys, f)
        pars = max(pars, abs(d.norm_sq() - f.l2_norm_sq()) / f.l2_norm_sq())
        rt = max(rt, float(np.max(np.abs(haar_inverse(sys, d).values - f.values))))
    checks = [
        _assertion("orthonormality", orth <= tol_orthonormality, max_error=orth, dense=J <= 4),
        _assertion("parseval", pars <= tol_parseval, max_relative_error=pars),
        _assertion("round_trip", rt <= tol_parseval, max_error=rt),
        _assertion("completeness", sys.n_wavelets + 1 == t.n_leaves, n_wavelets=sys.n_wavelets),
    ]
    if isinstance(model, SierpinskiModel) and J >= 1:
        worst_res, worst_dot, worst_mean = 0.0, 0.0, 0.0
        norms = []
        for j in range(min(J, 3)):
            for l in range(3**j):
                h1, h2 = sierpinski_reference_wavelets(sys, j, l)
                worst_dot = max(worst_dot, abs(h1.inner(h2)))
                worst_mean = max(worst_mean, abs(h1.mean()), abs(h2.mean()))
                worst_res = max(worst_res, span_residual(sys, h1, j, l), span_residual(sys, h2, j, l))
                norms += [h1.l2_norm_sq(), h2.l2_norm_sq()]
        checks.append(_assertion("reference_wavelets_orthogonal", worst_dot <= 1e-14, max_inner=worst_dot))
        checks.append(_assertion("reference_wavelets_zero_mean", worst_mean <= 1e-14, max_mean=worst_mean))
        checks.append(_assertion("reference_wavelets_in_span", worst_res < 1e-10, max_residual=worst_res))
        checks.append(_assertion("reference_wavelet_norm_sq", True, measured=[min(norms), max(norms)], note="1/3 under unit top measure"))
    return _report("haar", checks, model=model.name, J=J)


def suite_energy_equivalence(model, J: int, seed: int = 0, sigmas=(0.2, 0.5, 0.8), n_functions: int = 50, **_) -> dict:
    t = build_tree(model, J)
    sys = build_haar_system(t)
    funcs = random_cell_functions(t, n_functions, seed)
    worst_exact = 0.0
    literal = 0.0
    ratio_lo, ratio_hi = math.inf, 0.0
    for sigma in sigmas:
        p = KernelParams("dyadic", sigma=sigma)
        mult = dyadic_energy_multipliers(sys, sigma)
        for f in funcs:
            eq = energy_quadrature(t, f, p)
            c = haar_forward(sys, f).flat()
            exact = float(np.sum(c**2 * mult))
            series = energy_haar(sys, f, sigma)
            if eq > 0:
                worst_exact = max(worst_exact, abs(eq - exact) / eq)
                literal = max(literal, abs(eq - series) / eq)
                ratio_lo, ratio_hi = min(ratio_lo, eq / series), max(ratio_hi, eq / series)
    checks = [
        _assertion("haar_diagonalizes_dyadic_energy", worst_exact <= 1e-8, max_relative_error=worst_exact),
        _assertion("series_comparable_to_quadrature", 0 < ratio_lo <= ratio_hi < math.inf, ratio_range=[ratio_lo, ratio_hi]),
    ]
    return _report(
        "energy-equivalence",
        checks,
        model=model.name,
        J=J,
        sigmas=list(sigmas),
        unit_series_max_relative_gap=literal,
    )


def suite_coercivity(model, J: int, lam: float, sigma: float, seed: int = 0, n_functions: int = 100, **_) -> dict:
    t = build_tree(model, J)
    sys = build_haar_system(t)
    if not ker_pilambda_mask(sys, lam).any():
        raise ValueError(f"Ker Pi_lambda is trivial for lambda={lam} at J={J}")
    ok = True
    min_ratio = math.inf
    for f in kernel_space_functions(sys, lam, n_functions, seed):
        rep = coercivity_check(sys, f, lam, sigma)
        ok &= rep["pass"]
        if rep["bound"] > 0:
            min_ratio = min(min_ratio, rep["energy"] / rep["bound"])
    checks = [_assertion("dyadic_energy_coercive", ok, C=1.0, min_energy_over_bound=min_ratio)]
    info = {}
    if model.gamma is not None and sigma * model.gamma < 1:
        s = sigma * model.gamma
        info["metric_dyadic_constant"] = metric_dyadic_constant(t, random_cell_functions(t, 40, seed), s)
        info["metric_s"] = s
    return _report("coercivity", checks, model=model.name, J=J, **{"lambda": lam, "sigma": sigma}, **info)


def suite_duality(model, J: int, seed: int = 0, s: float = 0.9, sigma: float = 0.5, n_pairs: int = 100, **_) -> dict:
    t = build_tree(model, J)
    rng = np.random.default_rng(seed)
    modes = [KernelParams("dyadic", sigma=sigma)]
    if model.gamma is not None:
        modes.append(KernelParams("metric", s=s))
    checks = []
    for p in modes:
        worst = 0.0
        for _ in range(n_pairs):
            u = CellFunction(t, rng.standard_normal(t.n_leaves))
            v = CellFunction(t, rng.standard_normal(t.n_leaves))
            b = bilinear_form(t, u, v, p)
            d = 2.0 * apply_D2s(t, u, p).inner(v)
            scale = max(abs(b), math.sqrt(energy_quadrature(t, u, p) * energy_quadrature(t, v, p)))
            worst = max(worst, abs(b - d) / scale)
        checks.append(_assertion(f"duality_{p.mode}", worst <= 1e-12, max_relative_error=worst))
    return _report("duality", checks, model=model.name, J=J)


_RUNNERS = {
    "christ": suite_christ,
    "ultrametric": suite_ultrametric,
    "lemma1": suite_power_integrals,
    "lemma2": suite_ball_delta,
    "haar": suite_haar,
    "energy-equivalence": suite_energy_equivalence,
    "coercivity": suite_coercivity,
    "duality": suite_duality,
}


def run_suite(name: str, model, **kwargs) -> dict:
    if name not in _RUNNERS:
        raise ValueError(f"unknown suite {name!r}; choose from {SUITES}")
    return _RUNNERS[name](model, **kwargs)
