"""Input validation shared by the estimators and the CLI."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .dyadic import CellFunction, DyadicTree
from .energy import KernelParams
from .geometry import SpaceModel, make_model


def check_model(model) -> SpaceModel:
    if isinstance(model, SpaceModel):
        return model
    return make_model(str(model))


def check_level(J, name: str = "J") -> int:
    if isinstance(J, bool) or int(J) != J or J < 0:
        raise ValueError(f"{name} must be a nonnegative integer, got {J!r}")
    return int(J)


def check_cell_values(X, tree: DyadicTree, ensure_2d: bool = True) -> np.ndarray:
    """Rows of leaf values for ``tree``, as a float array of shape ``(n, N)``."""
    X = check_array(X, ensure_2d=ensure_2d, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != tree.n_leaves:
        raise ValueError(
            f"X has {X.shape[1]} features but the tree at J={tree.J} has {tree.n_leaves} leaves"
        )
    return X


def as_cell_function(f, tree: DyadicTree) -> CellFunction:
    if isinstance(f, CellFunction):
        if f.tree is not tree:
            raise ValueError("cell function belongs to a different tree")
        return f
    return CellFunction(tree, check_cell_values(np.asarray(f, dtype=float).reshape(1, -1), tree)[0])


def check_kernel_params(mode: str, s=None, sigma=None, model: SpaceModel | None = None) -> KernelParams:
    p = KernelParams(mode, s=s if mode == "metric" else None, sigma=None if mode == "metric" else sigma)
    if model is not None:
        p.check_model(model)
    return p


def check_positive(value, name: str) -> float:
    value = float(value)
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value
