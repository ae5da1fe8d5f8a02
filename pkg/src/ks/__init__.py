"""Structure-preserving BDF-k solver for the 2D parabolic-parabolic
Keller-Segel chemotaxis system.

The time stepping is linear and decoupled, and preserves three structural
properties of the continuous model exactly at the discrete level: cell mass,
strict positivity of the density, and the free-energy dissipation identity.
"""

from ks.grid import Grid2D, build_grid, apply_laplacian, gradient, integrate, norm
from ks.bdf import BdfScheme, History, bdf_coefficients, discrete_derivative, extrapolate
from ks.scheme import ModelParams, State, StepDiagnostics, advance, initialize

__all__ = [
    "Grid2D", "build_grid", "apply_laplacian", "gradient", "integrate", "norm",
    "BdfScheme", "History", "bdf_coefficients", "discrete_derivative", "extrapolate",
    "ModelParams", "State", "StepDiagnostics", "advance", "initialize",
]
