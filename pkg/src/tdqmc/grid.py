"""Uniform grids and complex fields on them.

Batched helpers (``normalize_rows``, ``gradient_rows``, ``interp_rows``) act on
the last axis of an array so that a whole ensemble of guide waves can be
handled in one call; the field-level functions wrap them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GridError(ValueError):
    pass


class WalkerLeftGrid(GridError):
    pass


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 2:
            raise GridError("n_points must be >= 2")
        if not self.x_max > self.x_min:
            raise GridError("x_max must exceed x_min")

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    def point(self, i: int) -> float:
        return self.x_min + i * self.spacing

    @property
    def x(self) -> np.ndarray:
        return self.x_min + np.arange(self.n_points) * self.spacing

    @property
    def k(self) -> np.ndarray:
        """Angular wavenumbers in FFT order, treating the grid as periodic."""
        return 2 * np.pi * np.fft.fftfreq(self.n_points, self.spacing)

    def contains(self, x) -> np.ndarray:
        return (np.asarray(x) >= self.x_min) & (np.asarray(x) <= self.x_max)


@dataclass(frozen=True)
class Grid2D:
    axis1: Grid1D
    axis2: Grid1D

    @classmethod
    def square(cls, x_min: float, x_max: float, n_points: int) -> "Grid2D":
        g = Grid1D(x_min, x_max, n_points)
        return cls(g, g)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.axis1.n_points, self.axis2.n_points)

    @property
    def cell_area(self) -> float:
        return self.axis1.spacing * self.axis2.spacing

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.axis1.x, self.axis2.x, indexing="ij")


@dataclass
class ComplexField1D:
    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.n_points,):
            raise GridError("values length must equal grid.n_points")

    def norm(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.spacing)


@dataclass
class ComplexField2D:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.grid.shape:
            raise GridError("values shape must equal grid.shape")

    def norm(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.cell_area)


def normalize_rows(values: np.ndarray, spacing: float) -> np.ndarray:
    """Scale each row (last axis) to unit rectangle-rule norm."""
    norms = np.sqrt(np.sum(values.real**2 + values.imag**2, axis=-1) * spacing)
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        raise GridError("degenerate field")
    return values / norms[..., None]


def normalize(field):
    """Return a copy of ``field`` with unit L2 norm (rectangle rule)."""
    if isinstance(field, ComplexField2D):
        norm = field.norm()
        if norm == 0 or not np.isfinite(norm):
            raise GridError("degenerate field")
        return ComplexField2D(field.grid, field.values / np.sqrt(norm))
    return ComplexField1D(field.grid, normalize_rows(field.values, field.grid.spacing))


def gradient_rows(values: np.ndarray, spacing: float) -> np.ndarray:
    if values.shape[-1] < 3:
        raise GridError("gradient needs at least 3 points")
    return np.gradient(values, spacing, axis=-1, edge_order=2)


def gradient_central(field: ComplexField1D) -> ComplexField1D:
    """Second-order central differences, one-sided second order at the ends."""
    return ComplexField1D(field.grid, gradient_rows(field.values, field.grid.spacing))


def _bracket(grid: Grid1D, x: np.ndarray):
    f = (x - grid.x_min) / grid.spacing
    i = np.clip(np.floor(f).astype(np.int64), 0, grid.n_points - 2)
    return i, f - i


def interp_rows(values: np.ndarray, grid: Grid1D, x: np.ndarray) -> np.ndarray:
    """Linear interpolation of row ``r`` of ``values`` at ``x[r]``.

    ``values`` has shape (..., n_points) and ``x`` the leading shape. Positions
    must already lie inside the grid; callers clip or flag escapes first.
    """
    x = np.asarray(x, dtype=float)
    i, t = _bracket(grid, x)
    lo = np.take_along_axis(values, i[..., None], axis=-1)[..., 0]
    hi = np.take_along_axis(values, (i + 1)[..., None], axis=-1)[..., 0]
    # exact at nodes: t == 0 must not touch `hi` arithmetic
    return np.where(t == 0, lo, lo * (1 - t) + hi * t)


def interpolate(field: ComplexField1D, x: float) -> complex:
    if not field.grid.contains(x):
        raise WalkerLeftGrid("walker left grid")
    return complex(interp_rows(field.values, field.grid, np.asarray(x)))
