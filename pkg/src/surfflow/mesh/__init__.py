from .core import SurfaceMesh, boundary_loops, gaussian_curvature_p1, orient_components
from .generate import GENERATORS, generate_mesh
from .meshio import load_mesh, save_mesh, write_obj, write_off

__all__ = [
    "SurfaceMesh",
    "boundary_loops",
    "gaussian_curvature_p1",
    "orient_components",
    "GENERATORS",
    "generate_mesh",
    "load_mesh",
    "save_mesh",
    "write_obj",
    "write_off",
]
