"""Canonical model families used by the CLI, the tests, and the experiments.

Two families cover the whole laboratory:

* ``continuum_cosine`` — physical period 2 per axis, separable cosine wells
  of unequal depth, mesh-refinable (h = 1/m).  This is the gapped period-2
  example for the construction certificate: unique edge minimizer
  θ0 = (-π/2, 0), simple and quadratically nondegenerate.
* ``lattice_random_model`` — the h = 1, period-4 random magnetic lattice
  model: same cosine wells sampled on 4 sites per axis, a background vector
  potential built by the ∇⊥ construction from the edge state, and a
  single-site profile u supported in the cell interior.  Its sign-definite
  1x1 condition matrix is certified at construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .bloch import (
    BandStructure,
    GapSpec,
    band_structure,
    check_edge_regularity,
    detect_gap,
    edge_states,
    require_gap,
)
from .disorder import (
    DisorderModel,
    DisorderRealization,
    sample_disorder,
    uniform_disorder,
)
from .errors import HypothesisError
from .fields import PeriodicBackground, SingleSiteProfile, boundary_margin_mask, masked_profile
from .geometry import LatticeGeometry
from .construction import condition_matrix, normalized_edge_state, perp_construct
from .operators import MagneticOperator, assemble_continuum, assemble_split


def cosine_wells(
    geometry: LatticeGeometry, amplitudes, periods=None, cross: float = 0.0
) -> np.ndarray:
    """Separable cosine-well potential sampled on the cell grid."""
    d = geometry.dimension
    if periods is None:
        periods = geometry.cell_span
    coords = [np.arange(q) * geometry.spacing for q in geometry.cell]
    grids = np.meshgrid(*coords, indexing="ij")
    v = np.zeros(geometry.cell)
    for a in range(d):
        v += amplitudes[a] * (1 - np.cos(2 * np.pi * grids[a] / periods[a])) / 2
    if cross and d >= 2:
        v += cross * np.cos(2 * np.pi * grids[0] / periods[0]) * np.cos(
            2 * np.pi * grids[1] / periods[1]
        )
    return v


def continuum_cosine(
    m: int, va: float = 8.0, vb: float = 12.0, torus_cells: int = 2
) -> tuple[LatticeGeometry, PeriodicBackground]:
    """Period-2 continuum family at mesh h = 1/m (q = 2m sites per axis)."""
    q = 2 * m
    geometry = LatticeGeometry(
        2, (torus_cells * q, torus_cells * q), spacing=1.0 / m, cell=(q, q)
    )
    v = cosine_wells(geometry, (va, vb))
    return geometry, PeriodicBackground(geometry, v)


@dataclass
class RandomModel:
    """A disorder family: geometry + background + profile + coupling law."""

    geometry: LatticeGeometry
    background: PeriodicBackground
    profile: SingleSiteProfile
    disorder: DisorderModel
    gap: GapSpec | None = None
    bands: BandStructure | None = None
    certificate: dict = field(default_factory=dict)

    def realization(self, index: int, master_seed: int) -> DisorderRealization:
        return sample_disorder(self.disorder, self.geometry, master_seed, index)

    def operator(
        self,
        lam: float,
        realization: DisorderRealization | None = None,
        index: int | None = None,
        master_seed: int = 0,
        phases: str = "peierls",
    ) -> MagneticOperator:
        if realization is None:
            if index is None:
                raise ValueError("need a realization or an index")
            realization = self.realization(index, master_seed)
        return assemble_continuum(
            self.geometry, self.background, self.profile,
            self.disorder.with_lambda(lam), realization, phases=phases,
        )

    def split(self, realization: DisorderRealization):
        return assemble_split(
            self.geometry, self.background, self.profile, None, realization
        )

    def split_family(self):
        """ω ↦ (H0, H1, H2) with ω given as a raw coupling array."""

        def family(omegas):
            omegas = np.asarray(omegas, dtype=float).reshape(self.geometry.cells_per_axis)
            return self.split(DisorderRealization(omegas, 0, 0))

        return family

    @property
    def u_sup_norm_sq(self) -> float:
        return self.profile.sup_norm_sq


def _certify_model(
    geometry: LatticeGeometry,
    background_v: np.ndarray,
    eps: float,
    u_scale: float,
    theta_resolution: int,
    phases: str = "peierls",
) -> tuple[PeriodicBackground, SingleSiteProfile, GapSpec, BandStructure, dict]:
    """Run the construction pipeline and certify the sign-definite condition."""
    base_bg = PeriodicBackground(geometry, background_v)
    bands0 = band_structure(base_bg, geometry, theta_resolution, store_edge_vectors=False)
    window = (float(np.min(bands0.bands)), float(np.sort(np.min(bands0.bands, axis=1))[-1]))
    gap0 = require_gap(detect_gap(bands0, window))
    edge_reg = check_edge_regularity(bands0, gap0)
    if not (edge_reg["simple"] and edge_reg["nondegenerate"]):
        raise HypothesisError("base model fails simplicity or nondegeneracy at the edge")
    state0 = edge_states(bands0, gap0)[0]
    a0 = perp_construct(state0, geometry)
    u = u_scale * a0 * boundary_margin_mask(geometry, 1)[None]
    profile = masked_profile(geometry, u, margin=1)

    background = PeriodicBackground(geometry, background_v, a0, eps)
    bands = band_structure(background, geometry, theta_resolution,
                           phases=phases, store_edge_vectors=False)
    gap = require_gap(detect_gap(bands, (gap0.lower_edge - 1.0, gap0.upper_edge + 1.0)))
    states = [normalized_edge_state(s, geometry) for s in edge_states(bands, gap)]
    condition = condition_matrix(states, background, geometry, profile)
    certificate = {
        "definiteness": condition.definiteness,
        "margin": condition.margin,
        "entries": condition.entries,
        "minimizers": condition.minimizers,
        "edge_simple": edge_reg["simple"],
        "edge_nondegenerate": edge_reg["nondegenerate"],
        "effective_masses": [m.tolist() for m in edge_reg["effective_masses"]],
        "base_gap": (gap0.lower_edge, gap0.upper_edge),
        "gap": (gap.lower_edge, gap.upper_edge),
    }
    return background, profile, gap, bands, certificate


@lru_cache(maxsize=8)
def _lattice_model_cached(
    sides: tuple, va: float, vb: float, eps: float, u_scale: float, theta_resolution: int
):
    geometry = LatticeGeometry(2, sides, spacing=1.0, cell=(4, 4))
    v = cosine_wells(geometry, (va, vb))
    background, profile, gap, bands, certificate = _certify_model(
        geometry, v, eps, u_scale, theta_resolution
    )
    return geometry, background, profile, gap, bands, certificate


def lattice_random_model(
    L: int = 16,
    va: float = 4.0,
    vb: float = 6.0,
    eps: float = 0.3,
    u_scale: float = 8.0,
    theta_resolution: int = 8,
) -> RandomModel:
    """The d=2 random magnetic lattice model with a certified condition matrix."""
    if L % 4 != 0:
        raise HypothesisError(f"torus side {L} must be a multiple of the period 4")
    geometry, background, profile, gap, bands, certificate = _lattice_model_cached(
        (L, L), va, vb, eps, u_scale, theta_resolution
    )
    if certificate["definiteness"] not in ("positive", "negative"):
        raise HypothesisError(
            f"condition matrix is {certificate['definiteness']}, not sign-definite"
        )
    return RandomModel(
        geometry=geometry,
        background=background,
        profile=profile,
        disorder=uniform_disorder(),
        gap=gap,
        bands=bands,
        certificate=certificate,
    )


def chain_random_model(
    L: int = 64, v: float = 3.0, u_values=(1.0, -0.6), lam0: float = 0.0
) -> RandomModel:
    """1-D period-4 gapped chain with interior-supported disorder profile.

    The workhorse for the dense Feshbach and derivative suites: small enough
    for exact linear algebra, with an honest internal gap.
    """
    if L % 4 != 0:
        raise HypothesisError(f"chain length {L} must be a multiple of the period 4")
    geometry = LatticeGeometry(1, (L,), spacing=1.0, cell=(4,))
    vfield = cosine_wells(geometry, (v,))
    background = PeriodicBackground(geometry, vfield)
    u = np.zeros((1, 4))
    u[0, 1], u[0, 2] = u_values
    profile = SingleSiteProfile(geometry, u)
    bands = band_structure(background, geometry, 16, store_edge_vectors=False)
    window = (float(np.min(bands.bands)), float(np.max(bands.bands)))
    gap = require_gap(detect_gap(bands, window))
    return RandomModel(
        geometry=geometry,
        background=background,
        profile=profile,
        disorder=uniform_disorder(lam=lam0),
        gap=gap,
        bands=bands,
    )


def free_model(d: int, L: int, spacing: float = 1.0) -> tuple[LatticeGeometry, PeriodicBackground]:
    geometry = LatticeGeometry(d, (L,) * d, spacing=spacing)
    return geometry, PeriodicBackground(geometry, np.zeros(geometry.cell))


def construction_certificate(
    family,
    meshes,
    eps: float,
    u_scale: float = 1.0,
    theta_resolution: int = 8,
    eps_taylor=(0.02, 0.04, 0.08),
) -> dict:
    """Full construction study over a mesh family m -> (geometry, background).

    At the coarsest mesh: band analysis, gap, simplicity/nondegeneracy,
    reality of the edge state, the sign-definiteness certificate for
    u = u_scale · A0 · interior_mask at coupling eps, and the ε-Taylor
    order of the first-order correction.  At every mesh: periodicity of the
    constructed A0 (against a plainly tiled torus evaluation), its discrete
    divergence, the annihilation residual, and the L² norm of ψ0', plus the
    observed refinement orders between consecutive meshes.
    """
    from .construction import (
        annihilation_check,
        cell_divergence,
        default_perp,
        epsilon_taylor_residuals,
        first_order_correction,
        l2cell_norm,
        perp_construct,
        realified,
        reality_check,
    )
    from .bloch import EdgeState, bloch_reduce

    meshes = list(meshes)
    geometry0, background0 = family(meshes[0])
    bands0 = band_structure(background0, geometry0, theta_resolution,
                            store_edge_vectors=False)
    window = (float(np.min(bands0.bands)), float(np.sort(np.min(bands0.bands, axis=1))[-1]))
    gap0 = require_gap(detect_gap(bands0, window))
    edge_reg = check_edge_regularity(bands0, gap0)
    state0 = edge_states(bands0, gap0)[0]
    theta0 = state0.theta
    n0 = gap0.edge_band_index
    reality = reality_check(state0.vector, theta0, geometry0)

    rows = []
    for m in meshes:
        geometry, background = family(m)
        reduced = bloch_reduce(background, geometry, theta0)
        vals, vecs = np.linalg.eigh(reduced.reduced_matrix)
        state = EdgeState(theta=theta0, energy=float(vals[n0]),
                          vector=vecs[:, n0], band_index=n0)
        a0 = perp_construct(state, geometry)
        psi = state.vector.reshape(geometry.cell)
        psi_n = psi / l2cell_norm(psi, geometry)
        state_n = EdgeState(theta=theta0, energy=state.energy,
                            vector=psi_n.ravel(), band_index=n0)
        annih = annihilation_check(a0, state_n, geometry)
        div = float(np.max(np.abs(cell_divergence(a0, geometry))))

        # periodicity: ∇⊥ of the plainly tiled f² on the torus vs the cell result
        f = realified(psi_n)
        f2_torus = geometry.tile_cell_field(f * f)
        perp = default_perp(geometry.dimension)
        h = geometry.spacing
        torus_a0 = np.stack(
            [
                sum(
                    perp.skew_matrix[i, j]
                    * (np.roll(f2_torus, -1, axis=j) - np.roll(f2_torus, 1, axis=j))
                    / (2 * h)
                    for j in range(geometry.dimension)
                )
                for i in range(geometry.dimension)
            ]
        )
        sl = tuple(slice(0, q) for q in geometry.cell)
        period_defect = 0.0
        for offsets in np.ndindex(*geometry.cells_per_axis):
            shifted = tuple(
                slice(o * q, (o + 1) * q) for o, q in zip(offsets, geometry.cell)
            )
            period_defect = max(
                period_defect,
                float(np.max(np.abs(torus_a0[(slice(None),) + shifted] - a0))),
            )

        bg_dir = PeriodicBackground(geometry, background.potential, a0, 0.0)
        psi1, diag = first_order_correction(bg_dir, geometry, state_n)
        rows.append(
            {
                "mesh": m,
                "h": geometry.spacing,
                "annihilation_residual": annih,
                "psi1_l2": l2cell_norm(psi1.reshape(geometry.cell), geometry),
                "divergence_max": div,
                "periodicity_defect": period_defect,
                "solve_residual": diag["solve_residual"],
            }
        )

    def orders(key):
        vals = [r[key] for r in rows]
        return [
            float(np.log2(vals[i] / vals[i + 1])) if vals[i + 1] > 0 else np.inf
            for i in range(len(vals) - 1)
        ]

    # ε-Taylor order of the correction at the coarsest mesh
    geometry, background = family(meshes[0])
    reduced = bloch_reduce(background, geometry, theta0)
    vals, vecs = np.linalg.eigh(reduced.reduced_matrix)
    psi = vecs[:, n0].reshape(geometry.cell)
    psi_n = psi / l2cell_norm(psi, geometry)
    state_n = EdgeState(theta=theta0, energy=float(vals[n0]),
                        vector=psi_n.ravel(), band_index=n0)
    a0 = perp_construct(state_n, geometry)
    rng = np.random.Generator(np.random.Philox(key=2024))
    a_generic = np.stack([
        rng.standard_normal(geometry.cell) for _ in range(geometry.dimension)
    ])
    bg_gen = PeriodicBackground(geometry, background.potential, a_generic, 0.0)
    psi1_gen, _ = first_order_correction(bg_gen, geometry, state_n)
    residuals = epsilon_taylor_residuals(
        bg_gen, geometry, state_n, psi1_gen, eps_taylor
    )
    eps_arr = np.asarray(eps_taylor, dtype=float)
    taylor_slope = float(np.polyfit(np.log(eps_arr), np.log(residuals), 1)[0])

    # sign-definiteness certificate at the coarsest mesh
    background_eps, profile, gap_eps, _, certificate = _certify_model(
        geometry, background.potential, eps, u_scale, theta_resolution
    )
    from .construction import condition_oracle, normalized_edge_state
    from .bloch import edge_states as _edge_states

    bands_eps = band_structure(background_eps, geometry, theta_resolution,
                               store_edge_vectors=False)
    gap_eps2 = require_gap(detect_gap(bands_eps, (gap_eps.lower_edge - 1.0,
                                                  gap_eps.upper_edge + 1.0)))
    state_eps = normalized_edge_state(_edge_states(bands_eps, gap_eps2)[0], geometry)
    oracle = condition_oracle(state_eps, background_eps, geometry, profile)

    return {
        "meshes": meshes,
        "rows": rows,
        "annihilation_orders": orders("annihilation_residual"),
        "psi1_orders": orders("psi1_l2"),
        "reality": reality,
        "edge_simple": edge_reg["simple"],
        "edge_nondegenerate": edge_reg["nondegenerate"],
        "effective_masses": [m.tolist() for m in edge_reg["effective_masses"]],
        "theta0": theta0,
        "gap": (gap0.lower_edge, gap0.upper_edge),
        "eps": eps,
        "u_scale": u_scale,
        "definiteness": certificate["definiteness"],
        "margin": certificate["margin"],
        "condition_entries": certificate["entries"],
        "condition_oracle": oracle,
        "epsilon_taylor_slope": taylor_slope,
        "cell_data": {
            "geometry": geometry,
            "V0": background.potential,
            "A0": background_eps.vector_potential,
            "u": profile.u,
            "u_mask": profile.support_mask,
        },
    }
