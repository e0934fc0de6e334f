"""Haar systems on a dyadic tree.

For every cube ``Q`` with ``b >= 2`` children the wavelets are obtained by
Gram-Schmidt in ``L^2(mu)`` over ``chi_Q / sqrt(mu(Q))`` followed by the
indicators of the first ``b - 1`` children, keeping the scaling function first
and discarding it afterwards.  A wavelet is stored as its vector of child
values; wavelet ``(j, k, l)`` lives on cube ``k`` of level ``j`` with
``l = 1..b-1``.

Coefficients are kept level by level as arrays of shape ``(b**j, b - 1)``,
which makes the forward and inverse transforms a single pass over the levels.
The flat ordering used by dense matrices is level-major, then cube index,
then ``l``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dyadic import CellFunction, DyadicTree, check_same_tree
from .geometry import Address, SierpinskiModel

__all__ = [
    "HaarFunction",
    "HaarSystem",
    "HaarDecomposition",
    "build_haar_system",
    "haar_forward",
    "haar_inverse",
    "project_Pj",
    "project_Pilambda",
    "ker_pilambda_basis",
    "sierpinski_reference_wavelets",
    "span_residual",
]


def _gram_schmidt_children(child_mu: np.ndarray) -> np.ndarray:
    """Wavelet child values for a batch of cubes.

    ``child_mu`` has shape ``(n, b)``; the result has shape ``(n, b-1, b)``.
    """
    n, b = child_mu.shape
    total = child_mu.sum(axis=1)
    basis = [np.ones((n, b)) / np.sqrt(total)[:, None]]
    for i in range(b - 1):
        v = np.zeros((n, b))
        v[:, i] = 1.0
        # modified Gram-Schmidt, twice for stability on skewed measures
        for _ in range(2):
            for e in basis:
                v = v - np.sum(v * e * child_mu, axis=1)[:, None] * e
        v = v / np.sqrt(np.sum(v * v * child_mu, axis=1))[:, None]
        basis.append(v)
    return np.stack(basis[1:], axis=1)


@dataclass(frozen=True)
class HaarFunction:
    """One wavelet: its cube, index ``l`` (1-based) and constant child values."""

    cube: Address
    level: int
    l: int
    child_values: np.ndarray = field(repr=False, compare=False)
    cube_measure: float
    flat_index: int

    @property
    def id(self) -> tuple[Address, int]:
        return (self.cube, self.l)


class HaarSystem:
    """Orthonormal Haar wavelets of all cubes at levels ``0..J-1`` of a tree."""

    def __init__(self, tree: DyadicTree):
        self.tree = tree
        b = tree.branching
        self.branching = b
        self.values = []  # per level: (b**j, b-1, b)
        for j in range(tree.J):
            child_mu = tree.measures[j + 1].reshape(-1, b)
            self.values.append(_gram_schmidt_children(child_mu))
        self.top_measure = float(tree.measures[0][0])
        counts = [b**j * (b - 1) for j in range(tree.J)]
        self.offsets = np.concatenate([[0], np.cumsum(counts)]).astype(int)
        self.n_wavelets = int(self.offsets[-1])
        self.wavelet_level = np.concatenate(
            [np.full(c, j) for j, c in enumerate(counts)] + [np.zeros(0, dtype=int)]
        ).astype(int)
        self.wavelet_cube_measure = np.concatenate(
            [np.repeat(tree.measures[j], b - 1) for j in range(tree.J)] + [np.zeros(0)]
        )

    # -- identification ----------------------------------------------------
    def flat_index(self, j: int, k: int, l: int) -> int:
        b = self.branching
        if not (0 <= j < self.tree.J and 0 <= k < b**j and 1 <= l <= b - 1):
            raise KeyError(f"no wavelet (level={j}, cube={k}, l={l}) in this system")
        return int(self.offsets[j] + k * (b - 1) + (l - 1))

    def locate(self, flat: int) -> tuple[int, int, int]:
        j = int(np.searchsorted(self.offsets, flat, side="right") - 1)
        r = flat - self.offsets[j]
        k, l0 = divmod(int(r), self.branching - 1)
        return j, k, l0 + 1

    def wavelet(self, flat: int) -> HaarFunction:
        j, k, l = self.locate(flat)
        return HaarFunction(
            cube=self.tree.address(j, k),
            level=j,
            l=l,
            child_values=self.values[j][k, l - 1].copy(),
            cube_measure=float(self.tree.measures[j][k]),
            flat_index=flat,
        )

    def wavelet_by_id(self, cube, l: int) -> HaarFunction:
        cube = self.tree.model.check_address(cube)
        return self.wavelet(self.flat_index(cube.level, self.tree.index_of(cube), l))

    def wavelets(self) -> list[HaarFunction]:
        return [self.wavelet(i) for i in range(self.n_wavelets)]

    def __len__(self) -> int:
        return self.n_wavelets

    # -- dense views ---------------------------------------------------------
    def as_cell_function(self, flat: int) -> CellFunction:
        return CellFunction(self.tree, self.wavelet_rows(np.array([flat]))[0])

    def wavelet_rows(self, flats: np.ndarray) -> np.ndarray:
        """Leaf values of the requested wavelets, shape ``(len(flats), N)``."""
        t = self.tree
        out = np.zeros((len(flats), t.n_leaves))
        for row, flat in enumerate(flats):
            j, k, l = self.locate(int(flat))
            span = self.branching ** (t.J - j - 1)
            start = k * self.branching * span
            vals = self.values[j][k, l - 1]
            out[row, start : start + self.branching * span] = np.repeat(vals, span)
        return out

    def wavelet_matrix(self) -> np.ndarray:
        return self.wavelet_rows(np.arange(self.n_wavelets))

    def top_scaling_function(self) -> CellFunction:
        return CellFunction.constant(self.tree, 1.0 / np.sqrt(self.top_measure))

    def values_at_leaf(self, leaf: int) -> np.ndarray:
        """``h(x)`` for every wavelet ``h`` with ``x`` in leaf cell ``leaf``."""
        t, b = self.tree, self.branching
        out = np.zeros(self.n_wavelets)
        for j in range(t.J):
            k = leaf // b ** (t.J - j)
            child = (leaf // b ** (t.J - j - 1)) % b
            start = self.offsets[j] + k * (b - 1)
            out[start : start + b - 1] = self.values[j][k, :, child]
        return out


@dataclass
class HaarDecomposition:
    """Top scaling coefficient plus per-level wavelet coefficient arrays."""

    system: HaarSystem = field(repr=False)
    top: float
    coeffs: list[np.ndarray] = field(repr=False)

    def flat(self) -> np.ndarray:
        if not self.coeffs:
            return np.zeros(0)
        return np.concatenate([c.ravel() for c in self.coeffs])

    @classmethod
    def from_flat(cls, system: HaarSystem, top: float, flat) -> "HaarDecomposition":
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (system.n_wavelets,):
            raise ValueError(f"expected {system.n_wavelets} coefficients, got shape {flat.shape}")
        b = system.branching
        coeffs = [
            flat[system.offsets[j] : system.offsets[j + 1]].reshape(b**j, b - 1).copy()
            for j in range(system.tree.J)
        ]
        return cls(system, float(top), coeffs)

    @classmethod
    def from_mapping(cls, system: HaarSystem, top: float, mapping: Mapping) -> "HaarDecomposition":
        """Build from ``{(cube_address, l): value}``; unknown ids are rejected."""
        flat = np.zeros(system.n_wavelets)
        for key, value in mapping.items():
            cube, l = key
            try:
                cube = system.tree.model.check_address(cube)
                idx = system.flat_index(cube.level, system.tree.index_of(cube), int(l))
            except (KeyError, ValueError) as exc:
                raise KeyError(f"unknown wavelet id {key!r}") from exc
            flat[idx] = value
        return cls.from_flat(system, top, flat)

    def as_mapping(self) -> dict:
        out = {}
        for i, c in enumerate(self.flat()):
            h = self.system.wavelet(i)
            out[h.id] = float(c)
        return out

    def norm_sq(self) -> float:
        return float(self.top**2 + np.sum(self.flat() ** 2))

    def to_csv(self) -> str:
        sys = self.system
        t = sys.tree
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cube_address", "level", "cube_measure", "wavelet_index", "coefficient"])
        w.writerow([t.format_address(Address()), 0, t.model.exact_measure(Address()), -1, repr(self.top)])
        for j, c in enumerate(self.coeffs):
            for k in range(c.shape[0]):
                a = t.address(j, k)
                for l in range(c.shape[1]):
                    w.writerow([t.format_address(a), j, t.model.exact_measure(a), l + 1, repr(float(c[k, l]))])
        return buf.getvalue()


def build_haar_system(t: DyadicTree) -> HaarSystem:
    return HaarSystem(t)


def haar_forward(sys: HaarSystem, f: CellFunction) -> HaarDecomposition:
    """Coefficients ``<f, h>`` by one bottom-up pass over cube integrals."""
    check_same_tree(f, sys.tree)
    t, b = sys.tree, sys.branching
    integrals = f.values * t.leaf_measures
    coeffs = [None] * t.J
    for j in range(t.J - 1, -1, -1):
        child = integrals.reshape(-1, b)
        coeffs[j] = np.einsum("nlb,nb->nl", sys.values[j], child)
        integrals = child.sum(axis=1)
    top = float(integrals[0] / np.sqrt(sys.top_measure))
    return HaarDecomposition(sys, top, coeffs)


def haar_inverse(sys: HaarSystem, d) -> CellFunction:
    """Reconstruct the cell function of a decomposition (or id mapping)."""
    if isinstance(d, Mapping):
        d = HaarDecomposition.from_mapping(sys, 0.0, d)
    if d.system is not sys:
        raise ValueError("decomposition belongs to a different Haar system")
    t, b = sys.tree, sys.branching
    means = np.array([d.top / np.sqrt(sys.top_measure)])
    for j in range(t.J):
        means = (means[:, None] + np.einsum("nl,nlb->nb", d.coeffs[j], sys.values[j])).ravel()
    return CellFunction(t, means)


def project_Pj(sys: HaarSystem, f: CellFunction, j: int) -> CellFunction:
    """Replace ``f`` by its ``mu``-average on every level-``j`` cube."""
    check_same_tree(f, sys.tree)
    t = sys.tree
    if not 0 <= j <= t.J:
        raise ValueError(f"level j={j} outside 0..{t.J}")
    span = sys.branching ** (t.J - j)
    mu = t.leaf_measures
    sums = (f.values * mu).reshape(-1, span).sum(axis=1)
    avg = sums / t.measures[j]
    return CellFunction(t, np.repeat(avg, span))


def project_Pilambda(sys: HaarSystem, f: CellFunction, lam: float) -> CellFunction:
    """Keep only wavelet content on cubes of measure ``> lam``.

    The top scaling coefficient is dropped: the projection acts on wavelet
    coefficients only.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    d = haar_forward(sys, f)
    flat = np.where(sys.wavelet_cube_measure > lam, d.flat(), 0.0)
    return haar_inverse(sys, HaarDecomposition.from_flat(sys, 0.0, flat))


def ker_pilambda_mask(sys: HaarSystem, lam: float) -> np.ndarray:
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return sys.wavelet_cube_measure <= lam


def ker_pilambda_basis(sys: HaarSystem, lam: float) -> list[HaarFunction]:
    """Wavelets on cubes of measure ``<= lam``; may be empty."""
    return [sys.wavelet(int(i)) for i in np.flatnonzero(ker_pilambda_mask(sys, lam))]


def sierpinski_reference_wavelets(sys: HaarSystem, j: int, l: int) -> tuple[CellFunction, CellFunction]:
    """The two explicit wavelets on the Sierpinski cube ``(j, l)``.

    Child values are ``4/sqrt(42) 3**(j/2) (1, 1/4, -5/4)`` and
    ``3/sqrt(14) 3**(j/2) (-2/3, 1, -1/3)``.  With the top cube of unit
    measure their squared norm is ``1/3``, not one.
    """
    t = sys.tree
    if not isinstance(t.model, SierpinskiModel):
        raise ValueError("reference wavelets exist only on the Sierpinski model")
    if not 0 <= j < t.J or not 0 <= l < 3**j:
        raise ValueError(f"cube ({j}, {l}) has no children in a tree with J={t.J}")
    scale = 3.0 ** (j / 2)
    h1 = 4.0 / np.sqrt(42.0) * scale * np.array([1.0, 0.25, -1.25])
    h2 = 3.0 / np.sqrt(14.0) * scale * np.array([-2.0 / 3.0, 1.0, -1.0 / 3.0])
    span = 3 ** (t.J - j - 1)
    out = []
    for vals in (h1, h2):
        v = np.zeros(t.n_leaves)
        start = l * 3 * span
        v[start : start + 3 * span] = np.repeat(vals, span)
        out.append(CellFunction(t, v))
    return out[0], out[1]


def span_residual(sys: HaarSystem, f: CellFunction, j: int, k: int) -> float:
    """Relative L^2 distance of ``f`` from the span of the wavelets of cube ``(j, k)``."""
    b = sys.branching
    flats = np.array([sys.flat_index(j, k, l) for l in range(1, b)])
    H = sys.wavelet_rows(flats)
    mu = sys.tree.leaf_measures
    coef = H @ (f.values * mu)
    resid = f.values - coef @ H
    norm = np.sqrt(f.l2_norm_sq())
    return float(np.sqrt(np.dot(resid**2, mu)) / norm) if norm > 0 else 0.0
