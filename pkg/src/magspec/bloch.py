"""Floquet/Bloch reduction, band structures, gap detection, and the
simplicity/nondegeneracy checks on the deterministic periodic operator.

The reduction works on one periodicity cell with twisted wrap links:
ψ(x + γ_a) = e^{i θ_a q_a h} ψ(x), so the per-axis twist angle is
τ_a = θ_a · q_a · h and the dual cell is θ_a ∈ [-π/(q_a h), π/(q_a h)).
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, HypothesisError, PreconditionError
from .fields import PeriodicBackground
from .geometry import LatticeGeometry
from .operators import _build_phase_operator, _hop_terms, _midpoint

DENSE_CELL_CAP = 4096
MINIMIZER_TOL = 1e-8
DEGENERACY_TOL = 1e-8


class FoldedThetaWarning(UserWarning):
    """θ outside the dual cell was folded back in."""


def _cell_geometry(geometry: LatticeGeometry) -> LatticeGeometry:
    return LatticeGeometry(
        dimension=geometry.dimension,
        sides=geometry.cell,
        spacing=geometry.spacing,
        cell=geometry.cell,
    )


def _twist_angles(geometry: LatticeGeometry, theta: np.ndarray) -> np.ndarray:
    return np.asarray(theta, dtype=float) * np.array(geometry.cell_span)


def fold_theta(geometry: LatticeGeometry, theta: np.ndarray) -> tuple[np.ndarray, bool]:
    """Fold θ into the dual cell; report whether folding happened."""
    span = np.array(geometry.cell_span)
    tau = np.asarray(theta, dtype=float) * span
    folded_tau = np.remainder(tau + np.pi, 2 * np.pi) - np.pi
    changed = bool(np.max(np.abs(folded_tau - tau)) > 1e-12)
    return folded_tau / span, changed


def _twist_alpha(geometry: LatticeGeometry, tau: np.ndarray) -> np.ndarray:
    """Per-axis wrap-link phase offsets implementing the boundary twist."""
    cell = geometry.cell
    alpha = np.zeros((geometry.dimension,) + cell)
    for a in range(geometry.dimension):
        sel = [slice(None)] * geometry.dimension
        sel[a] = cell[a] - 1
        alpha[a][tuple(sel)] += tau[a]
    return alpha


@dataclass
class BlochOperator:
    theta: np.ndarray
    reduced_matrix: np.ndarray
    folded: bool = False


def cell_operator_pieces(
    background: PeriodicBackground, geometry: LatticeGeometry, theta
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense cell matrices (H0, H1, H2) of the ε-split at twist θ.

    H0 = -Δ_θ + V0 (no vector potential), H1 = Σ_a (i∂_a A0_a + A0_a i∂_a)
    with centered twisted differences, H2 = diag(|A0|²).  The reduced
    operator at coupling ε is H0 + ε H1 + ε² H2.
    """
    g = _cell_geometry(geometry)
    tau = _twist_angles(geometry, theta)
    h = geometry.spacing
    n = g.n_sites

    alpha_twist = _twist_alpha(g, tau)
    mat0 = _build_phase_operator(
        g, "edge_laplacian", alpha_twist, background.potential, scale=1.0 / h**2
    ).toarray()

    a0 = background.vector_potential
    mat1 = np.zeros((n, n), dtype=complex)
    twist_phase = np.exp(1j * alpha_twist)
    for a in range(g.dimension):
        rows, cols, vals = _hop_terms(g, a, (0.5j / h) * twist_phase[a])
        p = np.zeros((n, n), dtype=complex)
        np.add.at(p, (rows, cols), vals)
        p += p.conj().T
        m = np.diag(a0[a].ravel())
        mat1 += p @ m + m @ p
    mat2 = np.diag(np.sum(a0**2, axis=0).ravel()).astype(complex)
    return mat0, mat1, mat2


def bloch_reduce(
    background: PeriodicBackground,
    geometry: LatticeGeometry,
    theta,
    phases: str = "peierls",
) -> BlochOperator:
    """Cell-sized Hermitian operator whose spectrum is the Floquet spectrum at θ."""
    theta_in, needs_fold = fold_theta(geometry, theta)
    if needs_fold:
        warnings.warn(
            f"theta {np.asarray(theta)} outside the dual cell; folded to {theta_in}",
            FoldedThetaWarning,
        )
    mat = _reduced_matrix(background, geometry, theta_in, phases)
    return BlochOperator(theta=theta_in, reduced_matrix=mat, folded=needs_fold)


def _reduced_matrix(background, geometry, theta, phases) -> np.ndarray:
    g = _cell_geometry(geometry)
    if g.n_sites > DENSE_CELL_CAP:
        raise CapacityError(
            f"cell has {g.n_sites} sites, beyond the dense reduction cap {DENSE_CELL_CAP}"
        )
    if phases == "expanded":
        h0, h1, h2 = cell_operator_pieces(background, geometry, theta)
        eps = background.coupling_eps
        return h0 + eps * h1 + eps**2 * h2
    tau = _twist_angles(geometry, theta)
    h = geometry.spacing
    a0 = background.effective_vector_potential
    alpha = np.stack(
        [-h * _midpoint(a0[a], a) for a in range(g.dimension)]
    ) + _twist_alpha(g, tau)
    return _build_phase_operator(
        g, "edge_laplacian", alpha, background.potential, scale=1.0 / h**2
    ).toarray()


@dataclass
class BandStructure:
    theta_grid: np.ndarray            # (n_theta, d)
    bands: np.ndarray                 # (n_bands, n_theta), ascending per θ
    grid_shape: tuple[int, ...]
    geometry: LatticeGeometry
    background: PeriodicBackground
    phases: str = "peierls"
    edge_vectors: dict = field(default_factory=dict)

    @property
    def n_bands(self) -> int:
        return self.bands.shape[0]

    def mesh_tau(self) -> float:
        return 2 * np.pi / min(self.grid_shape)

    def max_adjacent_jump(self, band: int | None = None) -> float:
        """Largest |E_n(θ) - E_n(θ')| between grid neighbors (periodic in τ)."""
        grid = self.bands.reshape((self.n_bands,) + self.grid_shape)
        if band is not None:
            grid = grid[band : band + 1]
        jump = 0.0
        for a in range(len(self.grid_shape)):
            jump = max(jump, float(np.max(np.abs(grid - np.roll(grid, 1, axis=a + 1)))))
        return jump

    def solve_at(self, theta, want_vectors: bool = False):
        theta, _ = fold_theta(self.geometry, theta)
        mat = _reduced_matrix(self.background, self.geometry, theta, self.phases)
        if want_vectors:
            return np.linalg.eigh(mat)
        return np.linalg.eigvalsh(mat)


def theta_axis_values(geometry: LatticeGeometry, resolution: int, axis: int) -> np.ndarray:
    """Uniform τ grid over [-π, π) mapped to physical θ for one axis."""
    tau = -np.pi + 2 * np.pi * np.arange(resolution) / resolution
    return tau / geometry.cell_span[axis]


def commensurate_thetas(geometry: LatticeGeometry) -> np.ndarray:
    """All θ compatible with the torus: τ_a ∈ 2π k / N_a, folded to the dual cell."""
    axes = []
    for a in range(geometry.dimension):
        n_cells = geometry.cells_per_axis[a]
        tau = 2 * np.pi * np.arange(n_cells) / n_cells
        tau = np.remainder(tau + np.pi, 2 * np.pi) - np.pi
        axes.append(tau / geometry.cell_span[a])
    return np.array(list(itertools.product(*axes)))


def band_structure(
    background: PeriodicBackground,
    geometry: LatticeGeometry,
    theta_resolution: int,
    phases: str = "peierls",
    store_edge_vectors: bool | None = None,
) -> BandStructure:
    """Dense diagonalization on a uniform θ-grid; bands sorted per θ."""
    if theta_resolution < 4:
        raise PreconditionError(
            f"theta_resolution must be >= 4 per axis, got {theta_resolution}"
        )
    d = geometry.dimension
    axes = [theta_axis_values(geometry, theta_resolution, a) for a in range(d)]
    thetas = np.array(list(itertools.product(*axes)))
    n_cell = _cell_geometry(geometry).n_sites
    if store_edge_vectors is None:
        store_edge_vectors = n_cell <= 256

    bands = np.empty((n_cell, len(thetas)))
    vectors = {}
    for t, theta in enumerate(thetas):
        mat = _reduced_matrix(background, geometry, theta, phases)
        if store_edge_vectors:
            vals, vecs = np.linalg.eigh(mat)
            bands[:, t] = vals
            vectors[t] = vecs
        else:
            bands[:, t] = np.linalg.eigvalsh(mat)

    edge_vectors = {}
    if store_edge_vectors:
        for n in range(n_cell):
            t_min = int(np.argmin(bands[n]))
            t_max = int(np.argmax(bands[n]))
            edge_vectors[n] = {
                "min": (t_min, vectors[t_min][:, n].copy()),
                "max": (t_max, vectors[t_max][:, n].copy()),
            }
    return BandStructure(
        theta_grid=thetas,
        bands=bands,
        grid_shape=(theta_resolution,) * d,
        geometry=geometry,
        background=background,
        phases=phases,
        edge_vectors=edge_vectors,
    )


@dataclass
class GapSpec:
    found: bool
    lower_edge: float = np.nan
    upper_edge: float = np.nan
    frame: tuple[float, float, float] = (np.nan, np.nan, np.nan)  # (M0, C0, C1)
    edge_band_index: int = -1
    lower_band_index: int = -1
    minimizers: np.ndarray = None  # type: ignore[assignment]
    simple: bool = False
    effective_mass_eigenvalues: list = None  # type: ignore[assignment]

    @property
    def width(self) -> float:
        return self.upper_edge - self.lower_edge

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower_edge + self.upper_edge)


def _local_extrema_mask(band_grid: np.ndarray, sign: float) -> np.ndarray:
    """Mask of grid points that are ≤ (sign=+1) or ≥ (sign=-1) all neighbors."""
    mask = np.ones_like(band_grid, dtype=bool)
    for a in range(band_grid.ndim):
        for shift in (1, -1):
            nb = np.roll(band_grid, shift, axis=a)
            mask &= sign * band_grid <= sign * nb + 1e-14
    return mask


def _refine_extremum(bands: BandStructure, n: int, theta0: np.ndarray, sign: float):
    """Local 5^d stencil search around θ0, two shrinking steps."""
    d = bands.geometry.dimension
    span = np.array(bands.geometry.cell_span)
    mesh = np.array([2 * np.pi / (r * s) for r, s in zip(bands.grid_shape, span)])
    best_theta = np.asarray(theta0, dtype=float).copy()
    best_val = sign * bands.solve_at(best_theta)[n]
    for step in (mesh / 4.0, mesh / 16.0):
        offsets = itertools.product(range(-2, 3), repeat=d)
        for off in offsets:
            if all(o == 0 for o in off):
                continue
            theta = best_theta + np.array(off) * step
            val = sign * bands.solve_at(theta)[n]
            if val < best_val - 1e-15:
                best_val = val
                best_theta = theta
    return sign * best_val, fold_theta(bands.geometry, best_theta)[0]


def _dedup_thetas(geometry: LatticeGeometry, thetas: list[np.ndarray], tol_tau: float):
    span = np.array(geometry.cell_span)
    kept: list[np.ndarray] = []
    for theta in thetas:
        dup = False
        for other in kept:
            delta = (theta - other) * span
            delta = np.remainder(delta + np.pi, 2 * np.pi) - np.pi
            if np.max(np.abs(delta)) < tol_tau:
                dup = True
                break
        if not dup:
            kept.append(theta)
    return kept


def detect_gap(bands: BandStructure, window: tuple[float, float]) -> GapSpec:
    """Widest open interval in the window free of band values.

    A candidate interval between consecutive sampled values is only a fake
    gap if some continuous band actually crosses it: either a band has
    values on both sides of the interval, or the two bands bordering it
    touch inside.  Either way the interval width is bounded by 1.5x the
    involved bands' largest adjacent-θ jump, which is the mesh-resolution
    criterion used to reject candidates.
    """
    w_lo, w_hi = window
    all_vals = np.sort(bands.bands.ravel())
    if w_hi <= all_vals[0] or w_lo >= all_vals[-1]:
        raise PreconditionError(
            f"window {window} does not intersect the band range "
            f"[{all_vals[0]:.6g}, {all_vals[-1]:.6g}]"
        )
    band_mins = np.min(bands.bands, axis=1)
    band_maxs = np.max(bands.bands, axis=1)

    def candidate_ok(lo, hi):
        width = hi - lo
        involved = set(np.nonzero((band_mins <= lo + 1e-12) & (band_maxs >= hi - 1e-12))[0])
        involved.add(int(np.argmin(np.abs(band_maxs - lo))))
        involved.add(int(np.argmin(np.abs(band_mins - hi))))
        bound = max(bands.max_adjacent_jump(n) for n in involved)
        return width > 1.5 * bound

    gaps = np.diff(all_vals)
    best, best_width = None, 0.0
    for i in np.nonzero(gaps > 0)[0]:
        lo, hi = all_vals[i], all_vals[i + 1]
        overlap = min(hi, w_hi) - max(lo, w_lo)
        if overlap > 0 and (hi - lo) > best_width and candidate_ok(lo, hi):
            best, best_width = (lo, hi), hi - lo
    if best is None:
        return GapSpec(found=False)

    lo, hi = best
    band_grid = bands.bands.reshape((bands.n_bands,) + bands.grid_shape)
    n0 = int(np.argmin(np.abs(np.min(bands.bands, axis=1) - hi)))
    n_lo = int(np.argmin(np.abs(np.max(bands.bands, axis=1) - lo)))

    jump = max(bands.max_adjacent_jump(n0), bands.max_adjacent_jump(n_lo))
    upper_grid = band_grid[n0]
    cand_mask = _local_extrema_mask(upper_grid, +1.0) & (upper_grid <= hi + jump)
    cand_idx = np.argwhere(cand_mask)
    refined = [
        _refine_extremum(bands, n0, bands.theta_grid[np.ravel_multi_index(tuple(ix), bands.grid_shape)], +1.0)
        for ix in cand_idx
    ]
    e_plus = min(v for v, _ in refined)
    minimizers = [th for v, th in refined if v - e_plus <= MINIMIZER_TOL]
    minimizers = _dedup_thetas(bands.geometry, minimizers, tol_tau=2 * np.pi / (8 * max(bands.grid_shape)))

    lower_grid = band_grid[n_lo]
    cand_mask_lo = _local_extrema_mask(lower_grid, -1.0) & (lower_grid >= lo - jump)
    refined_lo = [
        _refine_extremum(bands, n_lo, bands.theta_grid[np.ravel_multi_index(tuple(ix), bands.grid_shape)], -1.0)
        for ix in np.argwhere(cand_mask_lo)
    ]
    e_minus = max(v for v, _ in refined_lo)

    simple = True
    for theta in minimizers:
        vals = bands.solve_at(theta)
        others = np.delete(vals, n0)
        if np.min(np.abs(others - e_plus)) <= DEGENERACY_TOL:
            simple = False
    m0 = float(np.min(bands.bands))
    c0 = float(np.min(band_grid[n_lo]))
    c1 = float(np.max(band_grid[n0]))
    return GapSpec(
        found=True,
        lower_edge=float(e_minus),
        upper_edge=float(e_plus),
        frame=(m0, c0, c1),
        edge_band_index=n0,
        lower_band_index=n_lo,
        minimizers=np.array(minimizers),
        simple=simple,
        effective_mass_eigenvalues=None,
    )


@dataclass
class EdgeState:
    theta: np.ndarray
    energy: float
    vector: np.ndarray     # ℓ²-normalized on the cell
    band_index: int


def edge_states(bands: BandStructure, gap: GapSpec, edge: str = "upper") -> list[EdgeState]:
    """Eigenpairs of the tracked band at each gap-edge θ_k (fresh dense solves)."""
    if not gap.found:
        raise PreconditionError("no gap detected; edge states undefined")
    n0 = gap.edge_band_index if edge == "upper" else gap.lower_band_index
    thetas = gap.minimizers if edge == "upper" else None
    if thetas is None:
        raise PreconditionError("lower-edge maximizers are not recorded on the GapSpec")
    states = []
    for theta in thetas:
        vals, vecs = bands.solve_at(theta, want_vectors=True)
        states.append(
            EdgeState(theta=np.asarray(theta), energy=float(vals[n0]),
                      vector=vecs[:, n0], band_index=n0)
        )
    return states


def check_edge_regularity(bands: BandStructure, gap: GapSpec) -> dict:
    """Simplicity of the upper gap edge and nondegeneracy of its extremum.

    simple: exactly one band attains E+ and the neighbors stay > 1e-8 away at
    every minimizer.  nondegenerate: the centered-difference Hessian of the
    edge band at each minimizer is positive definite (quadratic minimum);
    its eigenvalues are the reported effective masses.
    """
    if not gap.found:
        raise PreconditionError("no gap detected")
    n0 = gap.edge_band_index
    g = bands.geometry
    d = g.dimension
    span = np.array(g.cell_span)
    mesh = np.array([2 * np.pi / (r * s) for r, s in zip(bands.grid_shape, span)])
    delta = mesh / 8.0

    simple = True
    separations = []
    masses = []
    hessians = []
    for theta in gap.minimizers:
        vals = bands.solve_at(theta)
        others = np.delete(vals, n0)
        sep = float(np.min(np.abs(others - vals[n0])))
        separations.append(sep)
        if sep <= DEGENERACY_TOL:
            simple = False

        def e_at(offset):
            return bands.solve_at(theta + offset)[n0]

        hess = np.zeros((d, d))
        e0 = e_at(np.zeros(d))
        for a in range(d):
            step_a = np.zeros(d)
            step_a[a] = delta[a]
            hess[a, a] = (e_at(step_a) - 2 * e0 + e_at(-step_a)) / delta[a] ** 2
            for b in range(a + 1, d):
                step_b = np.zeros(d)
                step_b[b] = delta[b]
                cross = (
                    e_at(step_a + step_b)
                    - e_at(step_a - step_b)
                    - e_at(-step_a + step_b)
                    + e_at(-step_a - step_b)
                ) / (4 * delta[a] * delta[b])
                hess[a, b] = hess[b, a] = cross
        eigs = np.linalg.eigvalsh(hess)
        hessians.append(hess)
        masses.append(eigs)

    nondegenerate = all(np.all(m > 0) for m in masses)
    gap.simple = simple
    gap.effective_mass_eigenvalues = [m.tolist() for m in masses]
    return {
        "simple": simple,
        "nondegenerate": nondegenerate,
        "effective_masses": masses,
        "separations": separations,
        "hessians": hessians,
        "conclusive": True,
    }


def gap_persists(op_matrix, gap: GapSpec, tol: float = 1e-9) -> bool:
    """No eigenvalue of a finite-volume operator inside the open gap."""
    vals = np.linalg.eigvalsh(op_matrix.toarray() if hasattr(op_matrix, "toarray") else op_matrix)
    inside = (vals > gap.lower_edge + tol) & (vals < gap.upper_edge - tol)
    return not np.any(inside)


def require_gap(gap: GapSpec) -> GapSpec:
    if not gap.found:
        raise HypothesisError("no spectral gap found in the requested window")
    return gap
