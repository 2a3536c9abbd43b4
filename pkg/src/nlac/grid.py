"""Cell-centered grid on the unit square with a one-cell ghost ring.

Grid functions are stored as ``(n + 2, n + 2)`` arrays indexed ``[i, j]``
with ``i`` along x and ``j`` along y.  Interior cells are ``1..n``; the
ghost ring (index 0 and n + 1) carries the homogeneous Neumann condition
by mirroring the adjacent interior value.

All reductions use plain ``numpy.sum`` over fixed-shape arrays, so results
are bit-reproducible for a given configuration.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Square mesh of ``n x n`` cells covering [0, 1]^2."""

    n: int

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise ValueError(f"grid needs an integer n >= 2, got {self.n!r}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def centers(self) -> np.ndarray:
        """Cell-center coordinates (i - 1/2) h for i = 1..n."""
        return (np.arange(1, self.n + 1) - 0.5) * self.h

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        c = self.centers
        return np.meshgrid(c, c, indexing="ij")


class Field:
    """Scalar grid function including its ghost ring."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values: np.ndarray | None = None):
        shape = (grid.n + 2, grid.n + 2)
        if values is None:
            values = np.zeros(shape)
        else:
            values = np.array(values, dtype=np.float64)
            if values.shape != shape:
                raise ValueError(f"expected array of shape {shape}, got {values.shape}")
        self.grid = grid
        self.values = values

    @classmethod
    def zeros(cls, grid: Grid) -> Field:
        return cls(grid)

    @classmethod
    def full(cls, grid: Grid, value: float) -> Field:
        return cls(grid, np.full((grid.n + 2, grid.n + 2), float(value)))

    @classmethod
    def from_interior(cls, grid: Grid, interior: np.ndarray) -> Field:
        """Wrap an ``(n, n)`` array and fill the ghost ring."""
        interior = np.asarray(interior, dtype=np.float64)
        if interior.shape != (grid.n, grid.n):
            raise ValueError(f"expected interior shape {(grid.n, grid.n)}, got {interior.shape}")
        return cls(grid, pad_neumann(interior))

    @property
    def interior(self) -> np.ndarray:
        return self.values[1:-1, 1:-1]

    def copy(self) -> Field:
        return Field(self.grid, self.values.copy())

    def __repr__(self):
        return f"Field(n={self.grid.n})"


class Norm(str, Enum):
    L2 = "L2"
    LINF = "Linf"
    H1 = "H1"


def pad_neumann(interior: np.ndarray) -> np.ndarray:
    """Return the interior array surrounded by a mirrored ghost ring."""
    # edge padding is exactly the x-then-y mirror, corners included
    return np.pad(interior, 1, mode="edge")


def _same_grid(f: Field, g: Field):
    if f.grid != g.grid:
        raise ValueError(f"fields live on different grids ({f.grid.n} vs {g.grid.n})")


def apply_neumann_bc(f: Field) -> Field:
    """Fill the ghost ring by mirroring; the interior is left untouched."""
    v = f.values.copy()
    v[0, 1:-1] = v[1, 1:-1]
    v[-1, 1:-1] = v[-2, 1:-1]
    v[:, 0] = v[:, 1]
    v[:, -1] = v[:, -2]
    return Field(f.grid, v)


def lap_padded(v: np.ndarray, h: float) -> np.ndarray:
    """Five-point Laplacian of a padded array, returned on the interior."""
    return (
        v[2:, 1:-1] + v[:-2, 1:-1] + v[1:-1, 2:] + v[1:-1, :-2] - 4.0 * v[1:-1, 1:-1]
    ) / (h * h)


def laplacian_h(f: Field) -> Field:
    """Five-point Laplacian; assumes the ghost ring of ``f`` is consistent.

    The result has Neumann ghosts filled so it can be fed to other operators.
    """
    return Field.from_interior(f.grid, lap_padded(f.values, f.grid.h))


def inner_l2(f: Field, g: Field) -> float:
    _same_grid(f, g)
    h = f.grid.h
    return float(h * h * np.sum(f.interior * g.interior))


def grad_inner(f: Field, g: Field) -> float:
    """Staggered inner product of discrete gradients.

    Edge differences ``D_x f`` live at i + 1/2 for i = 0..n; each cell
    averages its two faces in each direction.
    """
    _same_grid(f, g)
    h = f.grid.h
    fv, gv = f.values, g.values
    dxf = (fv[1:, 1:-1] - fv[:-1, 1:-1]) / h
    dxg = (gv[1:, 1:-1] - gv[:-1, 1:-1]) / h
    dyf = (fv[1:-1, 1:] - fv[1:-1, :-1]) / h
    dyg = (gv[1:-1, 1:] - gv[1:-1, :-1]) / h
    px = dxf * dxg
    py = dyf * dyg
    sx = np.sum(px[1:, :]) + np.sum(px[:-1, :])
    sy = np.sum(py[:, 1:]) + np.sum(py[:, :-1])
    return float(0.5 * h * h * (sx + sy))


def quad(f: Field) -> float:
    """Midpoint sum h^2 * sum f_ij over interior cells (domain integral)."""
    h = f.grid.h
    return float(h * h * np.sum(f.interior))


def norm(f: Field, kind: Norm | str = Norm.L2) -> float:
    kind = Norm(kind)
    if kind is Norm.LINF:
        return float(np.max(np.abs(f.interior)))
    l2sq = inner_l2(f, f)
    if kind is Norm.L2:
        return float(np.sqrt(l2sq))
    return float(np.sqrt(l2sq + grad_inner(f, f)))
