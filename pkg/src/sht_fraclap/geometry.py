"""Concrete spaces of homogeneous type.

Two models are provided:

* :class:`SierpinskiModel` -- the Sierpinski triangle ``S`` (optionally scaled
  by ``2**m0``) with its natural ternary subdivision, normalized so that the
  top cube has measure one.
* :class:`HalfLineWeightModel` -- the window ``[0, 2**m0)`` of the half-line
  with the weighted measure ``x**(-1/2) dx`` and the usual dyadic intervals.

Cells are identified by :class:`Address` objects: a tuple of child digits
(``1..branching``) read from the top cube down.  Both models have uniform
branching, so the cells of level ``j`` are also indexed by an integer
``0 <= k < branching**j`` in lexicographic address order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

__all__ = [
    "Address",
    "SpaceModel",
    "SierpinskiModel",
    "HalfLineWeightModel",
    "ifs_map",
    "representative_point",
    "cell_measure",
    "ahlfors_ratio",
    "make_model",
    "SIERPINSKI_GAMMA",
]

SIERPINSKI_GAMMA = math.log(3) / math.log(2)

# F_i(p) = p / 2 + offset_i
_IFS_OFFSETS = {
    1: (Fraction(0), Fraction(0)),
    2: (Fraction(1, 2), Fraction(0)),
    3: (Fraction(0), Fraction(1, 2)),
}


@dataclass(frozen=True, order=True)
class Address:
    """Path from the top cube to a cell: one child digit per level."""

    digits: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "digits", tuple(int(d) for d in self.digits))
        if any(d < 1 for d in self.digits):
            raise ValueError(f"address digits must be >= 1, got {self.digits}")

    @property
    def level(self) -> int:
        return len(self.digits)

    def parent(self) -> "Address":
        if not self.digits:
            raise ValueError("the top cube has no parent")
        return Address(self.digits[:-1])

    def child(self, i: int) -> "Address":
        return Address(self.digits + (i,))

    def is_prefix_of(self, other: "Address") -> bool:
        return other.digits[: self.level] == self.digits

    def index(self, branching: int) -> int:
        """Lexicographic position of the cell among the cells of its level."""
        k = 0
        for d in self.digits:
            if d > branching:
                raise ValueError(f"digit {d} exceeds branching {branching}")
            k = k * branching + (d - 1)
        return k

    @classmethod
    def from_index(cls, level: int, k: int, branching: int) -> "Address":
        if level < 0 or not 0 <= k < branching**level:
            raise ValueError(f"no cell {k} at level {level}")
        digits = []
        for _ in range(level):
            k, r = divmod(k, branching)
            digits.append(r + 1)
        return cls(tuple(reversed(digits)))

    def __str__(self) -> str:
        return f"{self.level}:" + "".join(str(d) for d in self.digits)


def _as_address(a) -> Address:
    if isinstance(a, Address):
        return a
    return Address(tuple(a))


def ifs_map(i: int, p: Sequence) -> tuple[Fraction, Fraction]:
    """Apply the contraction ``F_i`` of the Sierpinski IFS to the point ``p``.

    Coordinates are returned as exact fractions.

    >>> ifs_map(2, (0, 0))
    (Fraction(1, 2), Fraction(0, 1))
    """
    if i not in _IFS_OFFSETS:
        raise ValueError(f"IFS child index must be 1, 2 or 3, got {i!r}")
    ox, oy = _IFS_OFFSETS[i]
    x, y = (Fraction(c) for c in p)
    return (x / 2 + ox, y / 2 + oy)


class SpaceModel:
    """Common interface of the concrete models.

    Subclasses set ``name``, ``branching``, ``gamma`` (``None`` when the model
    is not Ahlfors regular) and ``dim`` and implement the level-wise vectorized
    accessors.  Everything is immutable after construction.
    """

    name: str = ""
    branching: int = 2
    gamma: float | None = None
    kappa: float = 1.0
    nu: float = 0.5
    dim: int = 1

    def __init__(self, m0: int = 0):
        if int(m0) != m0 or m0 < 0:
            raise ValueError(f"window exponent m0 must be a nonnegative integer, got {m0!r}")
        self.m0 = int(m0)

    # -- addresses -------------------------------------------------------
    def branching_of(self, a) -> int:
        self.check_address(a)
        return self.branching

    def check_address(self, a) -> Address:
        a = _as_address(a)
        bad = [d for d in a.digits if d > self.branching]
        if bad:
            raise ValueError(
                f"invalid address {a}: digits must lie in 1..{self.branching} for {self.name}"
            )
        return a

    def format_address(self, a) -> str:
        return str(self.check_address(a))

    def parse_address(self, text: str) -> Address:
        level, sep, rest = text.strip().partition(":")
        if not sep:
            raise ValueError(f"address {text!r} is not of the form 'j:digits'")
        j = int(level)
        digits = tuple(int(c) for c in rest)
        if len(digits) != j:
            raise ValueError(f"address {text!r}: expected {j} digits, got {len(digits)}")
        return self.check_address(Address(digits))

    # -- geometry --------------------------------------------------------
    def level_measures(self, j: int) -> np.ndarray:
        raise NotImplementedError

    def level_points(self, j: int) -> np.ndarray:
        """Representative points of all level-``j`` cells, shape ``(b**j, dim)``."""
        raise NotImplementedError

    def level_corners(self, j: int) -> np.ndarray:
        """Corner points of all level-``j`` cells, shape ``(b**j, ncorners, dim)``."""
        raise NotImplementedError

    def cell_diameter(self, j: int) -> float:
        raise NotImplementedError

    def cell_measure(self, a) -> float:
        a = self.check_address(a)
        return float(self.level_measures_at(a.level, np.array([a.index(self.branching)]))[0])

    def level_measures_at(self, j: int, idx: np.ndarray) -> np.ndarray:
        return self.level_measures(j)[idx]

    def exact_measure(self, a) -> str:
        """Measure as an exact string where a closed form is rational."""
        return repr(self.cell_measure(a))

    def representative_point(self, a) -> tuple[Fraction, ...]:
        raise NotImplementedError

    @staticmethod
    def distance(p, q) -> float:
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        return float(np.sqrt(np.sum((p - q) ** 2)))

    @staticmethod
    def pairwise_distances(P: np.ndarray, Q: np.ndarray | None = None) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        Q = P if Q is None else np.asarray(Q, dtype=float)
        diff = P[:, None, :] - Q[None, :, :]
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))

    def top_measure(self) -> float:
        return float(self.level_measures(0)[0])

    def describe(self) -> dict:
        return {"name": self.name, "m0": self.m0}

    def __repr__(self) -> str:
        return f"{type(self).__name__}(m0={self.m0})"

    def __eq__(self, other) -> bool:
        return type(self) is type(other) and self.m0 == other.m0

    def __hash__(self) -> int:
        return hash((type(self).__name__, self.m0))


class SierpinskiModel(SpaceModel):
    """Sierpinski triangle with vertices 0, 2**m0 e1, 2**m0 e2.

    Level-``j`` cells are the triangles ``F_{d1} o ... o F_{dj}(T)`` (scaled),
    each of measure ``3**-j``; the representative point of a cell is the
    centroid of its triangle.
    """

    name = "sierpinski"
    branching = 3
    gamma = SIERPINSKI_GAMMA
    dim = 2

    def _corner_ints(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        # lower-left corner of each level-j triangle in units of 2**-j
        cx = np.zeros(1, dtype=np.int64)
        cy = np.zeros(1, dtype=np.int64)
        for _ in range(j):
            cx = np.stack([2 * cx, 2 * cx + 1, 2 * cx], axis=1).ravel()
            cy = np.stack([2 * cy, 2 * cy, 2 * cy + 1], axis=1).ravel()
        return cx, cy

    def level_measures(self, j: int) -> np.ndarray:
        return np.full(3**j, 1.0 / 3**j)

    def level_measures_at(self, j: int, idx: np.ndarray) -> np.ndarray:
        return np.full(len(idx), 1.0 / 3**j)

    def exact_measure(self, a) -> str:
        a = self.check_address(a)
        return str(Fraction(1, 3**a.level))

    def level_points(self, j: int) -> np.ndarray:
        cx, cy = self._corner_ints(j)
        scale = 2.0 ** (self.m0 - j)
        return np.column_stack([(cx + 1 / 3) * scale, (cy + 1 / 3) * scale])

    def level_corners(self, j: int) -> np.ndarray:
        cx, cy = self._corner_ints(j)
        scale = 2.0 ** (self.m0 - j)
        x0, y0 = cx * scale, cy * scale
        return np.stack(
            [np.column_stack([x0, y0]), np.column_stack([x0 + scale, y0]), np.column_stack([x0, y0 + scale])],
            axis=1,
        )

    def cell_diameter(self, j: int) -> float:
        return math.sqrt(2.0) * 2.0 ** (self.m0 - j)

    def representative_point(self, a) -> tuple[Fraction, Fraction]:
        a = self.check_address(a)
        p = (Fraction(1, 3), Fraction(1, 3))
        for d in reversed(a.digits):
            p = ifs_map(d, p)
        scale = Fraction(2) ** self.m0
        return (p[0] * scale, p[1] * scale)

    def triangle(self, a) -> tuple[tuple[Fraction, Fraction], ...]:
        """Exact vertices of the closed triangle of cell ``a``."""
        a = self.check_address(a)
        verts = [(Fraction(0), Fraction(0)), (Fraction(1), Fraction(0)), (Fraction(0), Fraction(1))]
        for d in reversed(a.digits):
            verts = [ifs_map(d, v) for v in verts]
        scale = Fraction(2) ** self.m0
        return tuple((x * scale, y * scale) for x, y in verts)


class HalfLineWeightModel(SpaceModel):
    """Window ``[0, 2**m0)`` of the half-line with ``dmu = x**(-1/2) dx``.

    The level-``j`` intervals have length ``2**(m0 - j)``.  Addresses use the
    text form ``"j:k"`` with ``k`` the interval index.
    """

    name = "halfline"
    branching = 2
    gamma = None
    dim = 1
    weight_exponent = -0.5

    def _edges(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        h = 2.0 ** (self.m0 - j)
        k = np.arange(2**j, dtype=float)
        return k * h, (k + 1) * h

    def level_measures(self, j: int) -> np.ndarray:
        a, b = self._edges(j)
        # 2(sqrt(b) - sqrt(a)) without cancellation
        return 2.0 * (b - a) / (np.sqrt(b) + np.sqrt(a))

    def level_points(self, j: int) -> np.ndarray:
        a, b = self._edges(j)
        return ((a + b) / 2)[:, None]

    def level_corners(self, j: int) -> np.ndarray:
        a, b = self._edges(j)
        return np.stack([a, b], axis=1)[:, :, None]

    def cell_diameter(self, j: int) -> float:
        return 2.0 ** (self.m0 - j)

    def interval(self, a) -> tuple[Fraction, Fraction]:
        a = self.check_address(a)
        k = a.index(2)
        h = Fraction(2) ** (self.m0 - a.level)
        return (k * h, (k + 1) * h)

    def representative_point(self, a) -> tuple[Fraction]:
        lo, hi = self.interval(a)
        return ((lo + hi) / 2,)

    def format_address(self, a) -> str:
        a = self.check_address(a)
        return f"{a.level}:{a.index(2)}"

    def parse_address(self, text: str) -> Address:
        level, sep, rest = text.strip().partition(":")
        if not sep:
            raise ValueError(f"address {text!r} is not of the form 'j:k'")
        j = int(level)
        k = int(rest) if rest else 0
        return Address.from_index(j, k, 2)


def make_model(name: str, m0: int = 0) -> SpaceModel:
    models = {"sierpinski": SierpinskiModel, "halfline": HalfLineWeightModel}
    try:
        return models[name](m0=m0)
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(models)}") from None


def representative_point(model: SpaceModel, a) -> tuple[Fraction, ...]:
    return model.representative_point(a)


def cell_measure(model: SpaceModel, a) -> float:
    return model.cell_measure(a)


def ahlfors_ratio(model: SpaceModel, x, r: float) -> float:
    """``mu(B(x, r)) / r**gamma`` with the ball counted over cells of x's level.

    A level-``J`` cell belongs to the ball when its representative point lies
    at distance ``< r`` from the representative point of ``x``; the cell of
    ``x`` itself always counts.
    """
    if model.gamma is None:
        raise ValueError(f"model {model.name!r} has no Ahlfors exponent")
    x = model.check_address(x)
    J = x.level
    lo, hi = model.cell_diameter(J), model.cell_diameter(0)
    if not lo <= r <= hi:
        raise ValueError(f"radius {r} outside the resolvable range [{lo}, {hi}] at level {J}")
    pts = model.level_points(J)
    k = x.index(model.branching)
    d = model.pairwise_distances(pts[k : k + 1], pts)[0]
    inside = d < r
    inside[k] = True
    mass = float(model.level_measures(J)[inside].sum())
    return mass / r**model.gamma
