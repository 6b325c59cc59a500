"""
Penalty finite elements for the Stokes equations with slip boundary
conditions on smooth curved domains, with full and reduced boundary
quadrature of the penalty term and a verification harness.
"""
from .assembly import ElementChoice, build_dirichlet_system, build_saddle_system
from .cases import ManufacturedCase, disk_case
from .geometry import LevelSetDomain, UnitDisk, ellipse, outward_normal, project, signed_distance
from .mesh import Mesh, build_disk_mesh, build_ellipse_mesh, refine, validate

__version__ = "0.1.0"

__all__ = [
    "ElementChoice", "build_saddle_system", "build_dirichlet_system",
    "ManufacturedCase", "disk_case",
    "LevelSetDomain", "UnitDisk", "ellipse", "outward_normal", "project", "signed_distance",
    "Mesh", "build_disk_mesh", "build_ellipse_mesh", "refine", "validate",
]
