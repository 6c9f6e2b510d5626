"""Cell-centered tensor grids with matrix-free Neumann operators."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy import sparse
from scipy.fft import dctn, idctn

# Dense assembly is only meant for test oracles.
MAX_DENSE_CELLS = 4096


class GridMismatchError(ValueError):
    """Raised when a field does not live on the grid an operator was called with."""


class Grid(BaseModel):
    """Tensor-product cell-centered mesh of a box [0, L_1] x ... x [0, L_dim].

    Cell k along axis i has its center at (k + 1/2) * h_i with h_i = L_i / N_i.
    Field values are stored with shape ``cells`` (axis 0 is x).
    """

    dim: int
    extents: tuple[float, ...]
    cells: tuple[int, ...]

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check_grid(self) -> "Grid":
        if not 1 <= self.dim <= 3:
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dim}")
        if len(self.extents) != self.dim or len(self.cells) != self.dim:
            raise ValueError(
                f"dimension mismatch: dim={self.dim}, extents={list(self.extents)}, "
                f"cells={list(self.cells)}"
            )
        for length in self.extents:
            if not (length > 0 and math.isfinite(length)):
                raise ValueError(f"nonpositive extent: {length}")
        for count in self.cells:
            if count < 2:
                raise ValueError(f"cell count < 2: {count}")
        return self

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(length / count for length, count in zip(self.extents, self.cells))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def size(self) -> int:
        return math.prod(self.cells)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    @property
    def volume(self) -> float:
        return math.prod(self.extents)

    def centers(self, axis: int) -> np.ndarray:
        """Cell-center coordinates along one axis."""
        h = self.spacing[axis]
        return (np.arange(self.cells[axis]) + 0.5) * h

    def mesh(self) -> list[np.ndarray]:
        """Cell-center coordinate arrays, each of shape ``cells``."""
        return np.meshgrid(*(self.centers(i) for i in range(self.dim)), indexing="ij")


@dataclass(frozen=True, eq=False)
class Field:
    """Scalar cell values on a grid. Values are stored read-only."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.size != self.grid.size:
            raise GridMismatchError(
                f"field has {values.size} values but the grid has {self.grid.size} cells"
            )
        values = values.reshape(self.grid.shape)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Field":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[..., Any]) -> "Field":
        """Sample fn(x, y, ...) at cell centers."""
        return cls(grid, np.broadcast_to(fn(*grid.mesh()), grid.shape))

    def max(self) -> float:
        return float(self.values.max())

    def min(self) -> float:
        return float(self.values.min())


def build_grid(dim: int, extents: list[float], cells: list[int]) -> Grid:
    """Build a grid, validating dimension, extents and cell counts.

    Raises:
        ValueError: On dimension mismatch, nonpositive extent or cell count < 2
    """
    return Grid(dim=dim, extents=tuple(float(e) for e in extents), cells=tuple(int(c) for c in cells))


def _require(grid: Grid, *fields: Field) -> None:
    for f in fields:
        if f.grid != grid:
            raise GridMismatchError("field lives on a different grid")


def _axis_slices(ndim: int, axis: int) -> tuple[tuple[slice, ...], tuple[slice, ...]]:
    lo = [slice(None)] * ndim
    hi = [slice(None)] * ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return tuple(lo), tuple(hi)


def laplacian_array(values: np.ndarray, spacing: tuple[float, ...]) -> np.ndarray:
    """Neumann Laplacian of raw cell values as a sum of face-flux differences.

    Boundary faces carry zero flux, which is the ghost-cell reflection closure.
    """
    out = np.zeros_like(values)
    for axis, h in enumerate(spacing):
        flux = np.diff(values, axis=axis) / (h * h)
        lo, hi = _axis_slices(values.ndim, axis)
        out[lo] += flux
        out[hi] -= flux
    return out


def gradient_sq_array(values: np.ndarray, spacing: tuple[float, ...]) -> np.ndarray:
    """Cellwise |grad f|^2 from squared face differences averaged onto cells."""
    out = np.zeros_like(values)
    for axis, h in enumerate(spacing):
        g2 = (np.diff(values, axis=axis) / h) ** 2
        lo, hi = _axis_slices(values.ndim, axis)
        out[lo] += 0.5 * g2
        out[hi] += 0.5 * g2
    return out


def neumann_laplacian(grid: Grid, f: Field) -> Field:
    """Apply the discrete Neumann Laplacian (3/5/7-point stencil) to f."""
    _require(grid, f)
    return Field(grid, laplacian_array(f.values, grid.spacing))


def gradient_sq(grid: Grid, f: Field) -> Field:
    """Nonnegative cellwise approximation of |grad f|^2.

    Face differences are zero on boundary faces, so boundary cells only see their
    interior face. The cell-volume-weighted sum equals the discrete Dirichlet energy
    <f, -L f>.
    """
    _require(grid, f)
    return Field(grid, gradient_sq_array(f.values, grid.spacing))


def grad_inner(grid: Grid, f: Field, g: Field) -> float:
    """Face-paired approximation of the integral of grad f . grad g."""
    _require(grid, f, g)
    total = 0.0
    for axis, h in enumerate(grid.spacing):
        total += float(np.sum(np.diff(f.values, axis=axis) * np.diff(g.values, axis=axis))) / (h * h)
    return total * grid.cell_volume


def integrate(grid: Grid, f: Field) -> float:
    """Midpoint quadrature: sum of cell values times cell volume."""
    _require(grid, f)
    return float(np.sum(f.values)) * grid.cell_volume


def neumann_eigenvalues(grid: Grid) -> np.ndarray:
    """Eigenvalues of -L for every cosine mode, shape ``cells``.

    Along one axis mode k has (2/h^2)(1 - cos(pi k / N)) = (4/h^2) sin^2(pi k / (2N)).
    """
    lam = np.zeros(grid.shape)
    for axis, (h, n) in enumerate(zip(grid.spacing, grid.cells)):
        k = np.arange(n)
        lam_axis = (4.0 / (h * h)) * np.sin(np.pi * k / (2.0 * n)) ** 2
        shape = [1] * grid.dim
        shape[axis] = n
        lam = lam + lam_axis.reshape(shape)
    return lam


def apply_A_power(grid: Grid, f: Field, power: float) -> Field:
    """Apply (-L + I)^power via the orthonormal DCT-II, which diagonalises L."""
    _require(grid, f)
    coeffs = dctn(f.values, type=2, norm="ortho")
    coeffs *= (1.0 + neumann_eigenvalues(grid)) ** power
    return Field(grid, idctn(coeffs, type=2, norm="ortho"))


def apply_A_inv_sqrt(grid: Grid, f: Field) -> Field:
    """Apply A^{-1/2} for A = -Delta + 1 under Neumann conditions."""
    return apply_A_power(grid, f, -0.5)


def apply_A_inv(grid: Grid, f: Field) -> Field:
    """Apply A^{-1} for A = -Delta + 1 under Neumann conditions."""
    return apply_A_power(grid, f, -1.0)


def _stencil_1d(n: int, h: float) -> sparse.csr_matrix:
    """(1, -2, 1) / h^2 with the reflected ghost cell folded into the end diagonals."""
    main = np.full(n, -2.0)
    main[[0, -1]] = -1.0
    off = np.ones(n - 1)
    return sparse.diags([off, main, off], [-1, 0, 1], format="csr") / (h * h)


def assemble_laplacian(grid: Grid) -> np.ndarray:
    """Dense matrix of the Neumann Laplacian in row-major cell order.

    Assembled as the Kronecker sum of the 1D stencils, independently of the
    matrix-free operator.
    """
    if grid.size > MAX_DENSE_CELLS:
        raise ValueError(f"refusing to assemble a dense {grid.size}x{grid.size} matrix")
    matrix = sparse.csr_matrix((grid.size, grid.size))
    for axis, (n, h) in enumerate(zip(grid.cells, grid.spacing)):
        before = sparse.identity(math.prod(grid.cells[:axis]), format="csr")
        after = sparse.identity(math.prod(grid.cells[axis + 1 :]), format="csr")
        matrix = matrix + sparse.kron(sparse.kron(before, _stencil_1d(n, h)), after)
    return matrix.toarray()
