"""Conductivity imaging from surface eddy-current data.

Edge finite elements for the time-harmonic eddy-current problem, adjoint
gradients and a Sobolev-preconditioned nonlinear conjugate gradient
reconstruction.
"""
from .fem import Discretization, Material
from .inverse import NlcgConfig, nlcg_run
from .mesh import build_box_mesh, build_dof_maps

__version__ = "0.1.0"

__all__ = ["Discretization", "Material", "NlcgConfig", "nlcg_run", "build_box_mesh",
           "build_dof_maps", "__version__"]
