"""Dyadic and Haar analysis, nonlocal energies and Green functions on
spaces of homogeneous type (Sierpinski triangle, weighted half-line)."""

from .dyadic import CellFunction, DyadicTree, build_tree
from .energy import KernelParams, apply_D2s, bilinear_form, energy_haar, energy_quadrature
from .estimators import DyadicEnergy, GreenSolver, HaarTransformer
from .geometry import Address, HalfLineWeightModel, SierpinskiModel, make_model
from .haar import build_haar_system, haar_forward, haar_inverse
from .solver import assemble, green_function, weak_solve

__version__ = "0.1.0"

__all__ = [
    "Address",
    "SierpinskiModel",
    "HalfLineWeightModel",
    "make_model",
    "DyadicTree",
    "CellFunction",
    "build_tree",
    "build_haar_system",
    "haar_forward",
    "haar_inverse",
    "KernelParams",
    "energy_quadrature",
    "energy_haar",
    "bilinear_form",
    "apply_D2s",
    "assemble",
    "green_function",
    "weak_solve",
    "HaarTransformer",
    "DyadicEnergy",
    "GreenSolver",
]
