"""Periodic background data and the single-site vector-potential profile.

All fields are sampled on one periodicity cell (shape ``geometry.cell``);
assembly tiles them over the torus.  Vector fields carry a leading axis of
length d.  The background's vector potential enters operators scaled by
``coupling_eps``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ModelError, ShapeError
from .geometry import LatticeGeometry


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")


@dataclass(frozen=True)
class PeriodicBackground:
    """Cell samples of the electrostatic potential V0 and vector potential A0."""

    geometry: LatticeGeometry
    potential: np.ndarray                 # shape cell
    vector_potential: np.ndarray | None = None   # shape (d, *cell)
    coupling_eps: float = 0.0

    def __post_init__(self):
        g = self.geometry
        pot = np.asarray(self.potential, dtype=float)
        if pot.shape != g.cell:
            raise ShapeError(f"potential shape {pot.shape} != cell {g.cell}")
        _check_finite("potential", pot)
        vec = self.vector_potential
        if vec is None:
            vec = np.zeros((g.dimension,) + g.cell)
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (g.dimension,) + g.cell:
            raise ShapeError(
                f"vector potential shape {vec.shape} != {(g.dimension,) + g.cell}"
            )
        _check_finite("vector potential", vec)
        if self.coupling_eps < 0:
            raise ModelError(f"coupling_eps must be >= 0, got {self.coupling_eps}")
        object.__setattr__(self, "potential", pot)
        object.__setattr__(self, "vector_potential", vec)

    @property
    def effective_vector_potential(self) -> np.ndarray:
        """coupling_eps * A0, the field that actually enters the operator."""
        return self.coupling_eps * self.vector_potential

    def with_vector_potential(self, a0: np.ndarray, eps: float) -> "PeriodicBackground":
        return PeriodicBackground(self.geometry, self.potential, a0, eps)


def free_background(geometry: LatticeGeometry) -> PeriodicBackground:
    return PeriodicBackground(geometry, np.zeros(geometry.cell))


@dataclass(frozen=True)
class SingleSiteProfile:
    """Single-site vector potential u, compactly supported inside one cell."""

    geometry: LatticeGeometry
    u: np.ndarray                          # shape (d, *cell)
    support_mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        g = self.geometry
        u = np.asarray(self.u, dtype=float)
        if u.shape != (g.dimension,) + g.cell:
            raise ShapeError(f"u shape {u.shape} != {(g.dimension,) + g.cell}")
        _check_finite("u", u)
        mask = self.support_mask
        if mask is None:
            mask = np.any(u != 0.0, axis=0)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != g.cell:
            raise ShapeError(f"support mask shape {mask.shape} != cell {g.cell}")
        if np.any(u[:, ~mask] != 0.0):
            raise ModelError("u does not vanish outside its support mask")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "support_mask", mask)

    @property
    def sup_norm_sq(self) -> float:
        """sup_x |u(x)|^2 with the euclidean vector norm (the second-order coupling bound)."""
        return float(np.max(np.sum(self.u**2, axis=0)))

    def is_trivial(self) -> bool:
        return not np.any(self.support_mask)


def boundary_margin_mask(geometry: LatticeGeometry, margin: int = 1) -> np.ndarray:
    """Cell mask that is False on a ``margin``-site layer inside the cell boundary.

    The discrete integration-by-parts behind the condition matrix is exact only
    when u vanishes on such a layer (the discrete counterpart of supp u inside the
    open cell).
    """
    if margin < 0:
        raise ModelError("margin must be >= 0")
    mask = np.ones(geometry.cell, dtype=bool)
    for axis, q in enumerate(geometry.cell):
        if 2 * margin >= q:
            raise ModelError(f"margin {margin} leaves no interior on a {q}-site axis")
        coord = np.arange(q)
        inside = (coord >= margin) & (coord < q - margin)
        shape = [1] * geometry.dimension
        shape[axis] = q
        mask &= inside.reshape(shape)
    return mask


def masked_profile(
    geometry: LatticeGeometry, u: np.ndarray, margin: int = 1
) -> SingleSiteProfile:
    """Clip a raw vector field to a boundary-margined support and wrap it."""
    mask = boundary_margin_mask(geometry, margin)
    u = np.asarray(u, dtype=float).copy()
    u[:, ~mask] = 0.0
    return SingleSiteProfile(geometry, u, np.any(u != 0.0, axis=0) & mask)
