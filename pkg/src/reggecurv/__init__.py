"""Distributional Gaussian curvature and connection for Regge metrics on triangle meshes."""
from .mesh import Mesh, MeshError, build_structured, refine
from .fespace import FeSpace, FeFunction, geometry, interpolate, mass_matrix
from .regge import ReggeField, interp_regge, is_metric, regge_space

__version__ = "0.1.0"

__all__ = [
    "Mesh",
    "MeshError",
    "build_structured",
    "refine",
    "FeSpace",
    "FeFunction",
    "geometry",
    "interpolate",
    "mass_matrix",
    "ReggeField",
    "interp_regge",
    "is_metric",
    "regge_space",
]
