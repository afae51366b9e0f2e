"""Time-dependent quantum Monte Carlo for the 1D soft-core helium atom."""

from .grid import ComplexField1D, ComplexField2D, Grid1D, Grid2D
from .potentials import MEAN_FIELD, LaserParams, SoftCoreParams

__all__ = ["ComplexField1D", "ComplexField2D", "Grid1D", "Grid2D", "LaserParams", "MEAN_FIELD",
           "SoftCoreParams"]
