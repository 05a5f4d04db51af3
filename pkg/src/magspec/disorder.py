"""Disorder model and reproducible coupling draws.

One coupling per periodicity cell.  Draws use a counter-based Philox stream
keyed by (master_seed, realization_index); each cell consumes exactly one
uniform in row-major cell order, so a realization is reproducible bit for
bit regardless of how ensembles are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import LatticeGeometry


@dataclass(frozen=True)
class DisorderModel:
    """Coupling distribution on [-1, 1] plus the disorder strength λ.

    distribution is ("uniform", a, b) with -1 <= a < 0 < b <= 1, or
    ("table", points, densities) giving a piecewise-linear density on
    [-1, 1]; the density is normalized on construction.
    """

    distribution: tuple
    lam: float = 0.0

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError(f"disorder coupling lambda must be >= 0, got {self.lam}")
        kind = self.distribution[0]
        if kind == "uniform":
            _, a, b = self.distribution
            if not (-1.0 <= a < 0.0 < b <= 1.0):
                raise ConfigError(
                    "uniform support must satisfy -1 <= a < 0 < b <= 1 "
                    f"(negative infimum, positive supremum), got ({a}, {b})"
                )
            object.__setattr__(self, "distribution", ("uniform", float(a), float(b)))
        elif kind == "table":
            _, xs, ps = self.distribution
            xs = np.asarray(xs, dtype=float)
            ps = np.asarray(ps, dtype=float)
            if xs.ndim != 1 or xs.shape != ps.shape or xs.size < 2:
                raise ConfigError("density table needs matching 1-d points and values")
            if np.any(np.diff(xs) <= 0):
                raise ConfigError("density table points must be strictly increasing")
            if xs[0] < -1.0 or xs[-1] > 1.0:
                raise ConfigError("density support must lie within [-1, 1]")
            if np.any(ps < 0) or not np.any(ps > 0):
                raise ConfigError("density values must be nonnegative and not all zero")
            mass = np.trapezoid(ps, xs)
            if not np.isfinite(mass) or mass <= 0:
                raise ConfigError("density is not normalizable")
            ps = ps / mass
            lo = xs[np.argmax(ps > 0)]
            hi = xs[len(xs) - 1 - np.argmax(ps[::-1] > 0)]
            if not (lo < 0.0 < hi):
                raise ConfigError(
                    "density support must have negative infimum and positive supremum, "
                    f"got [{lo}, {hi}]"
                )
            object.__setattr__(self, "distribution", ("table", xs, ps))
        else:
            raise ConfigError(f"unknown distribution kind {kind!r}")

    @property
    def support(self) -> tuple[float, float]:
        if self.distribution[0] == "uniform":
            return self.distribution[1], self.distribution[2]
        xs, ps = self.distribution[1], self.distribution[2]
        lo = xs[np.argmax(ps > 0)]
        hi = xs[len(xs) - 1 - np.argmax(ps[::-1] > 0)]
        return float(lo), float(hi)

    def inverse_cdf(self, q: np.ndarray) -> np.ndarray:
        if self.distribution[0] == "uniform":
            _, a, b = self.distribution
            return a + (b - a) * q
        _, xs, ps = self.distribution
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (ps[1:] + ps[:-1]) * np.diff(xs))])
        cdf /= cdf[-1]
        return np.interp(q, cdf, xs)

    def with_lambda(self, lam: float) -> "DisorderModel":
        return DisorderModel(self.distribution, lam)


def uniform_disorder(a: float = -1.0, b: float = 1.0, lam: float = 0.0) -> DisorderModel:
    return DisorderModel(("uniform", a, b), lam)


@dataclass(frozen=True)
class DisorderRealization:
    """One coupling array ω with its provenance seed."""

    omegas: np.ndarray          # shape cells_per_axis
    master_seed: int
    realization_index: int


def _philox_key(master_seed: int, index: int) -> np.ndarray:
    return np.array([np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF), np.uint64(index)])


def sample_disorder(
    model: DisorderModel,
    geometry: LatticeGeometry,
    master_seed: int,
    index: int = 0,
) -> DisorderRealization:
    """Draw iid couplings, one per cell, deterministically keyed by (seed, index)."""
    if index < 0:
        raise ConfigError(f"realization index must be >= 0, got {index}")
    rng = np.random.Generator(np.random.Philox(key=_philox_key(master_seed, index)))
    q = rng.random(geometry.n_cells)
    omegas = model.inverse_cdf(q).reshape(geometry.cells_per_axis)
    return DisorderRealization(omegas=omegas, master_seed=master_seed, realization_index=index)


def constant_realization(geometry: LatticeGeometry, value: float) -> DisorderRealization:
    """Deterministic extreme configuration ω_j ≡ value (used by edge tracking)."""
    omegas = np.full(geometry.cells_per_axis, float(value))
    return DisorderRealization(omegas=omegas, master_seed=0, realization_index=0)
