"""Radial pseudo-spectral laboratory for the mass-critical half-wave equation
i u_t = D u - |u|^{2/3} u in three dimensions."""

from .errors import HalfwaveError
from .spectral import RadialGrid, SectorField, make_grid

__all__ = ["HalfwaveError", "RadialGrid", "SectorField", "make_grid"]
__version__ = "0.1.0"
