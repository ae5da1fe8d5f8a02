"""Uniform rectangular grid with homogeneous-Neumann discrete operators.

Scalar grid functions ("fields") are plain numpy arrays of shape (ny, nx),
row-major in j (y) then i (x), so ``f[j, i]`` lives at
``(xmin + i*hx, ymin + j*hy)``. The Neumann boundary condition is enforced by
mirror ghost nodes (ghost = first interior neighbor), which makes the 5-point
Laplacian symmetric under the trapezoidal quadrature inner product and makes
its quadrature integral vanish identically.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ks.errors import ConfigurationError


@dataclass(frozen=True)
class Grid2D:
    xmin: float
    xmax: float
    ymin: float
    ymax: float
    nx: int
    ny: int

    @property
    def hx(self) -> float:
        return (self.xmax - self.xmin) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.ymax - self.ymin) / (self.ny - 1)

    @cached_property
    def x(self) -> np.ndarray:
        return self.xmin + self.hx * np.arange(self.nx)

    @cached_property
    def y(self) -> np.ndarray:
        return self.ymin + self.hy * np.arange(self.ny)

    def meshgrid(self):
        """Coordinate arrays X, Y of shape (ny, nx)."""
        return np.meshgrid(self.x, self.y, indexing="xy")

    @cached_property
    def quad_weights(self) -> np.ndarray:
        """Trapezoidal weights of shape (ny, nx), scaled by hx*hy."""
        wx = np.ones(self.nx)
        wx[0] = wx[-1] = 0.5
        wy = np.ones(self.ny)
        wy[0] = wy[-1] = 0.5
        return self.hx * self.hy * np.outer(wy, wx)

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def zeros(self) -> np.ndarray:
        return np.zeros((self.ny, self.nx))

    def sample(self, fn, t=None) -> np.ndarray:
        """Evaluate a closure fn(x, y) or fn(x, y, t) at the nodes."""
        X, Y = self.meshgrid()
        return np.asarray(fn(X, Y) if t is None else fn(X, Y, t), dtype=float)


def build_grid(xmin, xmax, ymin, ymax, nx, ny) -> Grid2D:
    if not (xmax > xmin and ymax > ymin):
        raise ConfigurationError(
            f"degenerate domain extent: x=[{xmin},{xmax}], y=[{ymin},{ymax}]")
    if nx < 3 or ny < 3:
        raise ConfigurationError(f"need at least 3 nodes per axis, got nx={nx}, ny={ny}")
    return Grid2D(float(xmin), float(xmax), float(ymin), float(ymax), int(nx), int(ny))


def _mirror_pad(f: np.ndarray) -> np.ndarray:
    # reflect (without repeating the edge) realizes ghost = first interior neighbor
    return np.pad(f, 1, mode="reflect")


def apply_laplacian(f: np.ndarray, g: Grid2D) -> np.ndarray:
    """5-point Laplacian with mirror-ghost Neumann closure."""
    p = _mirror_pad(f)
    return (p[1:-1, 2:] - 2.0 * f + p[1:-1, :-2]) / g.hx**2 \
        + (p[2:, 1:-1] - 2.0 * f + p[:-2, 1:-1]) / g.hy**2


def gradient(f: np.ndarray, g: Grid2D):
    """Centered-difference gradient (dx, dy); normal component is exactly zero
    on the corresponding boundary (mirror ghosts)."""
    p = _mirror_pad(f)
    dx = (p[1:-1, 2:] - p[1:-1, :-2]) / (2.0 * g.hx)
    dy = (p[2:, 1:-1] - p[:-2, 1:-1]) / (2.0 * g.hy)
    return dx, dy


def integrate(f: np.ndarray, g: Grid2D) -> float:
    """Trapezoidal quadrature over the full domain."""
    return float(np.sum(g.quad_weights * f))


def norm(f: np.ndarray, g: Grid2D, kind: str = "L2") -> float:
    if kind == "L2":
        return float(np.sqrt(integrate(f * f, g)))
    if kind == "H1semi":
        dx, dy = gradient(f, g)
        return float(np.sqrt(integrate(dx * dx + dy * dy, g)))
    if kind == "Linf":
        return float(np.max(np.abs(f)))
    raise ConfigurationError(f"unknown norm kind {kind!r}")
