"""Truncated dyadic families, the dyadic ultrametric and ball counting.

A :class:`DyadicTree` holds levels ``0..J`` of the subdivision of one top
cube.  Because both models branch uniformly, the cube with index ``k`` at
level ``j`` has parent ``k // b`` and children ``b*k .. b*k + b - 1``, and its
leaves are the contiguous block ``[k * b**(J-j), (k+1) * b**(J-j))``.
Points are identified with leaves; all pair quantities are dense ``N x N``
arrays, which is fine at the resolutions this library targets.
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .geometry import Address, SpaceModel

__all__ = [
    "DyadicTree",
    "CellFunction",
    "ResourceLimitError",
    "build_tree",
    "smallest_common_cube",
    "dyadic_distance",
    "ball_measure",
    "compare_measure_ball_delta",
    "verify_christ_properties",
    "DEFAULT_MAX_LEAVES",
]

DEFAULT_MAX_LEAVES = 3**8


class ResourceLimitError(RuntimeError):
    """Raised when a requested tree would exceed the configured leaf cap."""


class DyadicTree:
    """Levels ``0..J`` of the dyadic cubes of ``model`` inside one top cube."""

    def __init__(self, model: SpaceModel, J: int, max_leaves: int = DEFAULT_MAX_LEAVES):
        if int(J) != J or J < 0:
            raise ValueError(f"J must be a nonnegative integer, got {J!r}")
        b = model.branching
        if b**J > max_leaves:
            raise ResourceLimitError(
                f"tree with J={J} has {b**J} leaves, above the cap max_leaves={max_leaves}"
            )
        self.model = model
        self.J = int(J)
        self.branching = b
        self.nu = model.nu
        self.measures = [model.level_measures(j) for j in range(J + 1)]
        self.points = [model.level_points(j) for j in range(J + 1)]
        self._lock = threading.RLock()
        self._cache: dict = {}

    # -- basic shape -----------------------------------------------------
    @property
    def n_leaves(self) -> int:
        return self.branching**self.J

    @property
    def n_cubes(self) -> int:
        return sum(self.branching**j for j in range(self.J + 1))

    @property
    def leaf_measures(self) -> np.ndarray:
        return self.measures[self.J]

    @property
    def leaf_points(self) -> np.ndarray:
        return self.points[self.J]

    def n_cubes_at(self, j: int) -> int:
        return self.branching**j

    def address(self, j: int, k: int) -> Address:
        return Address.from_index(j, k, self.branching)

    def index_of(self, a, level: int | None = None) -> int:
        a = self.model.check_address(a)
        if level is not None and a.level != level:
            raise ValueError(f"address {a} is not at level {level} of this tree")
        if a.level > self.J:
            raise ValueError(f"address {a} is deeper than the tree (J={self.J})")
        return a.index(self.branching)

    def leaf_index(self, a) -> int:
        """Index of the leaf ``a``; rejects addresses that are not leaves of this tree."""
        return self.index_of(a, level=self.J)

    def leaf_address(self, k: int) -> Address:
        return self.address(self.J, k)

    def parse_address(self, text: str) -> Address:
        return self.model.parse_address(text)

    def format_address(self, a) -> str:
        return self.model.format_address(a)

    def leaf_ancestor_index(self, j: int) -> np.ndarray:
        """For every leaf, the index of its level-``j`` ancestor."""
        return np.arange(self.n_leaves) // self.branching ** (self.J - j)

    def leaves_of(self, j: int, k: int) -> slice:
        span = self.branching ** (self.J - j)
        return slice(k * span, (k + 1) * span)

    def _cached(self, key, build):
        with self._lock:
            if key not in self._cache:
                self._cache[key] = build()
            return self._cache[key]

    # -- pairwise arrays -------------------------------------------------
    def leaf_distances(self) -> np.ndarray:
        """Distances between leaf representative points (read-only array)."""

        def build():
            D = self.model.pairwise_distances(self.leaf_points)
            D.setflags(write=False)
            return D

        return self._cached("distances", build)

    def common_level(self) -> np.ndarray:
        """Level of the smallest common cube of each leaf pair (``J`` on the diagonal)."""

        def build():
            N = self.n_leaves
            L = np.zeros((N, N), dtype=np.int16)
            for j in range(1, self.J + 1):
                anc = self.leaf_ancestor_index(j)
                L[anc[:, None] == anc[None, :]] = j
            L.setflags(write=False)
            return L

        return self._cached("common_level", build)

    def delta_matrix(self) -> np.ndarray:
        """Dyadic distance between all leaf pairs; zero on the diagonal."""

        def build():
            L = self.common_level()
            anc_measures = np.zeros((self.J + 1, self.n_leaves))
            for j in range(self.J + 1):
                anc_measures[j] = self.measures[j][self.leaf_ancestor_index(j)]
            # the common cube at level L[a,b] is the level-L ancestor of a
            Dl = anc_measures[L, np.arange(self.n_leaves)[:, None]]
            np.fill_diagonal(Dl, 0.0)
            Dl.setflags(write=False)
            return Dl

        return self._cached("delta", build)

    # -- export ----------------------------------------------------------
    def cubes(self) -> Iterable[dict]:
        b = self.branching
        for j in range(self.J + 1):
            for k in range(b**j):
                a = self.address(j, k)
                yield {
                    "address": self.format_address(a),
                    "level": j,
                    "measure": self.model.exact_measure(a),
                    "parent": None if j == 0 else self.format_address(a.parent()),
                    "children": []
                    if j == self.J
                    else [self.format_address(a.child(i)) for i in range(1, b + 1)],
                    "point": [float(c) for c in self.points[j][k]],
                }

    def to_json(self) -> str:
        doc = {"model": self.model.describe(), "J": self.J, "cubes": list(self.cubes())}
        return json.dumps(doc, indent=1)

    def __repr__(self) -> str:
        return f"DyadicTree({self.model!r}, J={self.J})"


@dataclass
class CellFunction:
    """Function constant on each leaf cell of ``tree``."""

    tree: DyadicTree
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.tree.n_leaves,):
            raise ValueError(f"expected {self.tree.n_leaves} leaf values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("cell function values must be finite")
        self.values = v

    @property
    def level(self) -> int:
        return self.tree.J

    def l2_norm_sq(self) -> float:
        return float(np.dot(self.values**2, self.tree.leaf_measures))

    def inner(self, other: "CellFunction") -> float:
        check_same_tree(self, other.tree)
        return float(np.dot(self.values * other.values, self.tree.leaf_measures))

    def mean(self) -> float:
        mu = self.tree.leaf_measures
        return float(np.dot(self.values, mu) / mu.sum())

    def __add__(self, other):
        check_same_tree(other, self.tree)
        return CellFunction(self.tree, self.values + other.values)

    def __sub__(self, other):
        check_same_tree(other, self.tree)
        return CellFunction(self.tree, self.values - other.values)

    def __mul__(self, c: float):
        return CellFunction(self.tree, self.values * float(c))

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, tree):
        return cls(tree, np.zeros(tree.n_leaves))

    @classmethod
    def constant(cls, tree, c=1.0):
        return cls(tree, np.full(tree.n_leaves, float(c)))

    @classmethod
    def indicator(cls, tree, a):
        a = tree.model.check_address(a)
        v = np.zeros(tree.n_leaves)
        v[tree.leaves_of(a.level, tree.index_of(a))] = 1.0
        return cls(tree, v)


def check_same_tree(f: CellFunction, tree: DyadicTree) -> None:
    if f.tree is not tree:
        raise ValueError("cell function belongs to a different tree")


def build_tree(model: SpaceModel, J: int, max_leaves: int = DEFAULT_MAX_LEAVES) -> DyadicTree:
    return DyadicTree(model, J, max_leaves=max_leaves)


def smallest_common_cube(t: DyadicTree, a, b) -> Address:
    """Longest common prefix of two leaf addresses."""
    a = t.model.check_address(a)
    b = t.model.check_address(b)
    t.leaf_index(a)
    t.leaf_index(b)
    n = 0
    for da, db in zip(a.digits, b.digits):
        if da != db:
            break
        n += 1
    return Address(a.digits[:n])


def dyadic_distance(t: DyadicTree, a, b) -> float:
    a = t.model.check_address(a)
    b = t.model.check_address(b)
    if a == b:
        t.leaf_index(a)
        return 0.0
    return t.model.cell_measure(smallest_common_cube(t, a, b))


def ball_measure(t: DyadicTree, x, r: float) -> float:
    """Measure of the open ``d``-ball about leaf ``x``, counted over leaves.

    Leaves whose representative point is at distance ``< r`` count, and the
    cell of ``x`` always counts.
    """
    if r < 0:
        raise ValueError("radius must be nonnegative")
    k = t.leaf_index(x)
    row = t.leaf_distances()[k]
    inside = row < r
    inside[k] = True
    return float(t.leaf_measures[inside].sum())


def _ball_measures_at(t: DyadicTree, rows: np.ndarray, radii: np.ndarray) -> np.ndarray:
    D = t.leaf_distances()
    mu = t.leaf_measures
    out = np.empty(len(rows))
    for i, (k, r) in enumerate(zip(rows, radii)):
        inside = D[k] < r
        inside[k] = True
        out[i] = mu[inside].sum()
    return out


def sample_distinct_pairs(n: int, n_samples: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    if n < 2:
        raise ValueError("need at least two leaves to sample distinct pairs")
    a = rng.integers(0, n, size=n_samples)
    b = rng.integers(0, n - 1, size=n_samples)
    b = b + (b >= a)
    return a, b


def compare_measure_ball_delta(t: DyadicTree, n_samples: int, seed: int = 0) -> float:
    """Empirical constant ``C`` in ``mu(B(x, d(x,y))) <= C delta(x,y)``.

    The maximum of the ratio over ``n_samples`` random pairs of distinct leaves.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    a, b = sample_distinct_pairs(t.n_leaves, n_samples, rng)
    D = t.leaf_distances()
    delta = t.delta_matrix()[a, b]
    balls = _ball_measures_at(t, a, D[a, b])
    return float(np.max(balls / delta))


def verify_christ_properties(t: DyadicTree) -> dict:
    """Empirical check of the dyadic-family properties on a built tree.

    Returns a report; nothing is raised on failure.  Diameters are exhaustive
    maxima over the corner points of the leaves in each cube.  Eccentricity is
    estimated at the representative point of each cube: the inner radius is
    the distance to the nearest leaf point outside the cube (capped at the
    outer radius when the cube is the whole window), the outer radius the
    largest distance to a leaf corner inside.
    """
    model, J, b = t.model, t.J, t.branching
    corners = model.level_corners(J)  # (N, c, dim)
    leaf_pts = t.leaf_points
    levels = []
    structural = {}

    top = t.measures[0].sum()
    sums_ok = []
    for j in range(J + 1):
        s = t.measures[j].sum()
        sums_ok.append(abs(s - top) <= 1e-12 * max(1.0, top))
    structural["D4_partition"] = all(sums_ok)

    additivity = []
    for j in range(J):
        child_sum = t.measures[j + 1].reshape(-1, b).sum(axis=1)
        additivity.append(np.allclose(child_sum, t.measures[j], rtol=1e-12, atol=0))
    structural["measure_additivity"] = all(additivity)

    # D5/D6: every cube at j+1 has one parent; offspring counts within [1, M]
    parents_ok = True
    for j in range(J):
        kids = np.arange(b ** (j + 1))
        parent = kids // b
        counts = np.bincount(parent, minlength=b**j)
        parents_ok &= bool(np.all(counts >= 1) and np.all(counts <= b))
    structural["D5_unique_parent"] = parents_ok
    structural["D6_offspring_bounds"] = parents_ok and b >= 1

    # D7: nested or disjoint -- check leaf blocks of random cube pairs
    rng = np.random.default_rng(0)
    d7 = True
    for _ in range(200):
        j1, j2 = sorted(rng.integers(0, J + 1, size=2))
        k1 = int(rng.integers(0, b**j1))
        k2 = int(rng.integers(0, b**j2))
        s1, s2 = t.leaves_of(j1, k1), t.leaves_of(j2, k2)
        inter = max(s1.start, s2.start) < min(s1.stop, s2.stop)
        nested = s1.start <= s2.start and s2.stop <= s1.stop
        if inter and not nested:
            d7 = False
    structural["D7_nested_or_disjoint"] = d7
    structural["D8_quadrant"] = "satisfied by convention: the top cube plays the role of X"

    for j in range(J + 1):
        span = b ** (J - j)
        n = b**j
        diam = np.empty(n)
        ecc = np.empty(n)
        cube_pts = t.points[j]
        for k in range(n):
            block = corners[k * span : (k + 1) * span].reshape(-1, corners.shape[2])
            m = 0.0
            for c0 in range(0, len(block), 512):
                m = max(m, model.pairwise_distances(block[c0 : c0 + 512], block).max())
            diam[k] = m
            centre = cube_pts[k : k + 1]
            d_in = model.pairwise_distances(centre, block)[0]
            outer = d_in.max()
            others = np.ones(t.n_leaves, dtype=bool)
            others[k * span : (k + 1) * span] = False
            if others.any():
                inner = model.pairwise_distances(centre, leaf_pts[others])[0].min()
                inner = min(inner, outer)
            else:
                inner = outer
            ecc[k] = outer / inner if inner > 0 else np.inf
        scale = 2.0**model.m0 * t.nu**j
        ratio = diam / scale
        levels.append(
            {
                "level": j,
                "diam_over_nu_j_min": float(ratio.min()),
                "diam_over_nu_j_max": float(ratio.max()),
                "eccentricity_min": float(ecc.min()),
                "eccentricity_max": float(ecc.max()),
                "measure_sum": float(t.measures[j].sum()),
            }
        )
    band_lo = min(lv["diam_over_nu_j_min"] for lv in levels)
    band_hi = max(lv["diam_over_nu_j_max"] for lv in levels)
    passed = all(v for v in structural.values() if isinstance(v, bool))
    return {
        "model": model.name,
        "J": J,
        "nu": t.nu,
        "levels": levels,
        "diameter_band": [band_lo, band_hi],
        "structural": structural,
        "pass": bool(passed),
    }
