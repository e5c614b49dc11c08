"""Streamfunction-vorticity Navier-Stokes and Euler solvers on triangulated surfaces."""

__version__ = "0.1.0"
