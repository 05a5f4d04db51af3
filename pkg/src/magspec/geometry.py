"""Torus geometry: site indexing, links, cells, and plaquettes.

Sites live on a d-dimensional torus with ``sides[a]`` sites per axis and
grid spacing ``spacing`` (1 for the pure lattice models, <1 for continuum
discretizations).  A periodicity cell of ``cell[a]`` sites per axis tiles
the torus; disorder couplings are indexed by cells.  Sites are enumerated
row-major, so boolean/scalar fields are ndarrays of shape ``sides`` and
flat vectors align with ``ndarray.ravel()``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError, ShapeError


@dataclass(frozen=True)
class LatticeGeometry:
    dimension: int
    sides: tuple[int, ...]
    spacing: float = 1.0
    cell: tuple[int, ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        d = self.dimension
        if d not in (1, 2, 3):
            raise ModelError(f"dimension must be 1, 2 or 3, got {d}")
        sides = tuple(int(s) for s in self.sides)
        if len(sides) != d or any(s <= 0 for s in sides):
            raise ModelError(f"sides must be {d} positive integers, got {self.sides}")
        if not (self.spacing > 0):
            raise ModelError(f"spacing must be positive, got {self.spacing}")
        cell = self.cell if self.cell is not None else tuple(1 for _ in range(d))
        cell = tuple(int(q) for q in cell)
        if len(cell) != d or any(q <= 0 for q in cell):
            raise ModelError(f"cell must be {d} positive integers, got {self.cell}")
        for s, q in zip(sides, cell):
            if s % q != 0:
                raise ModelError(f"cell {cell} does not divide sides {sides} componentwise")
        object.__setattr__(self, "sides", sides)
        object.__setattr__(self, "cell", cell)

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.sides))

    @property
    def cells_per_axis(self) -> tuple[int, ...]:
        return tuple(s // q for s, q in zip(self.sides, self.cell))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells_per_axis))

    @property
    def cell_sites(self) -> int:
        """Sites inside one periodicity cell."""
        return int(np.prod(self.cell))

    @property
    def cell_span(self) -> tuple[float, ...]:
        """Physical extent of the periodicity cell per axis."""
        return tuple(q * self.spacing for q in self.cell)

    def site_index_grid(self) -> np.ndarray:
        """Flat site indices arranged on the ``sides`` grid."""
        return np.arange(self.n_sites).reshape(self.sides)

    def neighbor_indices(self, axis: int) -> np.ndarray:
        """Flat index of the +axis neighbor (periodic wrap), shaped like the grid."""
        return np.roll(self.site_index_grid(), -1, axis=axis)

    def tile_cell_field(self, cell_field: np.ndarray) -> np.ndarray:
        """Tile a field sampled on one cell over the whole torus."""
        cell_field = np.asarray(cell_field)
        if cell_field.shape != self.cell:
            raise ShapeError(
                f"cell field shape {cell_field.shape} does not match cell {self.cell}"
            )
        return np.tile(cell_field, self.cells_per_axis)

    def spread_cell_values(self, per_cell: np.ndarray) -> np.ndarray:
        """Broadcast one value per cell onto every site of that cell."""
        per_cell = np.asarray(per_cell)
        if per_cell.shape != self.cells_per_axis:
            if per_cell.size == self.n_cells:
                per_cell = per_cell.reshape(self.cells_per_axis)
            else:
                raise ShapeError(
                    f"expected {self.n_cells} cell values, got shape {per_cell.shape}"
                )
        out = per_cell
        for axis, q in enumerate(self.cell):
            out = np.repeat(out, q, axis=axis)
        return out

    def boundary_distance(self) -> np.ndarray:
        """Per-site distance (in sites) to the torus seam, min over axes."""
        grids = np.meshgrid(
            *[np.minimum(np.arange(s), s - np.arange(s)) for s in self.sides],
            indexing="ij",
        )
        return np.minimum.reduce(grids)

    def refined(self, factor: int = 2) -> "LatticeGeometry":
        """Same physical torus with the mesh refined by an integer factor."""
        return LatticeGeometry(
            dimension=self.dimension,
            sides=tuple(s * factor for s in self.sides),
            spacing=self.spacing / factor,
            cell=tuple(q * factor for q in self.cell),
        )
