"""Finite-volume magnetic operators on the torus.

Three kinds are assembled:

* ``edge_laplacian`` — (Hψ)(x) = Σ_{|x-y|=1} (ψ(x) - e^{iA((x,y))} ψ(y)),
* ``hopping``        — (Hψ)(x) = Σ_{|x-y|=1} e^{iA((x,y))} ψ(y),
* ``continuum_fd``   — second-order finite differences for
  (i∇ + εA0 + λA_Λ)² + V0 with periodic boundary conditions.

The continuum discretization carries unit-modulus link phases
exp(-i h A(midpoint)·ê); midpoint values come from averaging the two site
values of the summed field.  ``assemble_split`` returns the operator split
H0 + λ H1 + λ² H2 with H1 the symmetrized first-order cross term built from
the centered magnetic difference — the split sum is what
``phases="expanded"`` assembles, and it matches the Peierls form to O(h³λ³).

Edge potentials are stored as one real value per positively oriented edge
(shape ``(d, *sides)``); the value on the reversed edge is minus the stored
one, which enforces antisymmetry structurally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .disorder import DisorderModel, DisorderRealization
from .errors import DataError, ModelError, ShapeError
from .fields import PeriodicBackground, SingleSiteProfile
from .geometry import LatticeGeometry

HERMITICITY_RTOL = 1e-13


@dataclass
class MagneticOperator:
    kind: str
    geometry: LatticeGeometry
    matrix: sp.csr_matrix
    edge_potential: np.ndarray | None = None   # real α on positive edges, (d, *sides)
    metadata: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def link_phase(self) -> np.ndarray:
        if self.edge_potential is None:
            raise ModelError(f"operator part {self.metadata.get('part')} carries no link phases")
        return np.exp(1j * self.edge_potential)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def hermiticity_defect(self) -> float:
        diff = (self.matrix - self.matrix.conj().T).tocoo()
        num = np.abs(diff.data).max() if diff.nnz else 0.0
        den = np.abs(self.matrix.tocoo().data).max() if self.matrix.nnz else 1.0
        return float(num / max(den, 1e-300))


def _check_hermitian(op: MagneticOperator) -> MagneticOperator:
    defect = op.hermiticity_defect()
    if defect > HERMITICITY_RTOL:
        raise DataError(f"assembled operator not Hermitian: relative defect {defect:.3e}")
    return op


def _hop_terms(geometry: LatticeGeometry, axis: int, values: np.ndarray):
    """COO triplets for Σ_x values[x] |x><x+e_axis| (periodic wrap)."""
    rows = geometry.site_index_grid().ravel()
    cols = geometry.neighbor_indices(axis).ravel()
    return rows, cols, values.ravel()


def _build_phase_operator(
    geometry: LatticeGeometry,
    kind: str,
    alpha: np.ndarray,
    site_potential: np.ndarray | None,
    scale: float,
) -> sp.csr_matrix:
    """Assemble Σ_a (hop with phase e^{iα_a}) in edge-laplacian or hopping form."""
    n = geometry.n_sites
    rows, cols, data = [], [], []
    for a in range(geometry.dimension):
        phase = np.exp(1j * alpha[a])
        sign = -1.0 if kind != "hopping" else 1.0
        r, c, v = _hop_terms(geometry, a, sign * scale * phase)
        rows.append(r)
        cols.append(c)
        data.append(v)
        # reversed edges carry the conjugate phase
        rows.append(c)
        cols.append(r)
        data.append(np.conj(v))
    diag = np.zeros(n, dtype=complex)
    if kind != "hopping":
        diag += 2.0 * geometry.dimension * scale
    if site_potential is not None:
        diag += site_potential.ravel()
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    data.append(diag)
    mat = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()
    mat.sum_duplicates()
    return mat


def _validate_edge_potential(geometry: LatticeGeometry, edge_potential: np.ndarray) -> np.ndarray:
    alpha = np.asarray(edge_potential, dtype=float)
    d = geometry.dimension
    fwd_shape = (d,) + geometry.sides
    if alpha.shape == fwd_shape:
        pass
    elif alpha.shape == (2 * d,) + geometry.sides:
        # slots d..2d-1 carry α((x, x-e_a)); reversal must negate the stored value
        for a in range(d):
            rev = alpha[d + a]
            expect = -np.roll(alpha[a], 1, axis=a)
            if np.max(np.abs(rev - expect)) > 1e-12:
                raise DataError(
                    f"edge potential violates antisymmetry under reversal on axis {a}"
                )
        alpha = alpha[:d]
    else:
        raise ShapeError(
            f"edge potential shape {alpha.shape} does not match the edge set "
            f"{fwd_shape} (or its doubled directed form)"
        )
    if not np.all(np.isfinite(alpha)):
        raise DataError("edge potential contains non-finite values")
    return alpha


def assemble_lattice(
    kind: str,
    geometry: LatticeGeometry,
    edge_potential: np.ndarray,
    site_potential: np.ndarray | None = None,
) -> MagneticOperator:
    """Assemble one of the two lattice models from per-edge vector potentials."""
    if kind not in ("edge_laplacian", "hopping"):
        raise ModelError(f"unknown lattice kind {kind!r}")
    alpha = _validate_edge_potential(geometry, edge_potential)
    site = None
    if site_potential is not None:
        site = np.asarray(site_potential, dtype=float)
        if site.shape != geometry.sides:
            raise ShapeError(f"site potential shape {site.shape} != sides {geometry.sides}")
    mat = _build_phase_operator(geometry, kind, alpha, site, scale=1.0)
    return _check_hermitian(
        MagneticOperator(kind=kind, geometry=geometry, matrix=mat, edge_potential=alpha)
    )


def _site_fields(
    geometry: LatticeGeometry,
    background: PeriodicBackground,
    profile: SingleSiteProfile | None,
    realization: DisorderRealization | None,
):
    """Tiled site fields: V0, εA0, and the disorder field A_Λ (λ=1 units)."""
    if background.geometry.cell != geometry.cell:
        raise ShapeError(
            f"background cell {background.geometry.cell} != geometry cell {geometry.cell}"
        )
    v_site = geometry.tile_cell_field(background.potential)
    a0_site = np.stack(
        [geometry.tile_cell_field(f) for f in background.effective_vector_potential]
    )
    if profile is None or realization is None:
        a_dis = np.zeros_like(a0_site)
    else:
        if profile.geometry.cell != geometry.cell:
            raise ModelError(
                "profile support exceeds one periodicity cell: "
                f"profile cell {profile.geometry.cell} vs geometry cell {geometry.cell}"
            )
        omega_site = geometry.spread_cell_values(realization.omegas)
        if not np.all(np.isfinite(omega_site)):
            raise DataError("disorder realization contains non-finite couplings")
        a_dis = np.stack(
            [omega_site * geometry.tile_cell_field(f) for f in profile.u]
        )
    return v_site, a0_site, a_dis


def _midpoint(field_axis: np.ndarray, axis: int) -> np.ndarray:
    """Value at the midpoint of the +axis link, by endpoint averaging."""
    return 0.5 * (field_axis + np.roll(field_axis, -1, axis=axis))


def assemble_continuum(
    geometry: LatticeGeometry,
    background: PeriodicBackground,
    profile: SingleSiteProfile | None = None,
    model: DisorderModel | None = None,
    realization: DisorderRealization | None = None,
    phases: str = "peierls",
) -> MagneticOperator:
    """Discretize (i∇ + εA0 + λA_Λ)² + V0 on the torus.

    ``phases="peierls"`` puts the full field into unit-modulus link phases;
    ``phases="expanded"`` assembles H0 + λH1 + λ²H2 from the split, which is
    the matching discretization for the split-consistency check.
    """
    lam = model.lam if model is not None else 0.0
    if phases == "expanded":
        h0, h1, h2 = assemble_split(geometry, background, profile, model, realization)
        mat = (h0.matrix + lam * h1.matrix + lam**2 * h2.matrix).tocsr()
        return _check_hermitian(
            MagneticOperator(
                kind="continuum_fd",
                geometry=geometry,
                matrix=mat,
                edge_potential=None,
                metadata={"phases": "expanded", "lam": lam, "eps": background.coupling_eps},
            )
        )
    if phases != "peierls":
        raise ModelError(f"unknown phase mode {phases!r}")
    v_site, a0_site, a_dis = _site_fields(geometry, background, profile, realization)
    h = geometry.spacing
    a_total = a0_site + lam * a_dis
    alpha = np.stack([-h * _midpoint(a_total[a], a) for a in range(geometry.dimension)])
    mat = _build_phase_operator(geometry, "edge_laplacian", alpha, v_site, scale=1.0 / h**2)
    return _check_hermitian(
        MagneticOperator(
            kind="continuum_fd",
            geometry=geometry,
            matrix=mat,
            edge_potential=alpha,
            metadata={"phases": "peierls", "lam": lam, "eps": background.coupling_eps},
        )
    )


def assemble_split(
    geometry: LatticeGeometry,
    background: PeriodicBackground,
    profile: SingleSiteProfile | None = None,
    model: DisorderModel | None = None,
    realization: DisorderRealization | None = None,
) -> tuple[MagneticOperator, MagneticOperator, MagneticOperator]:
    """The λ-split H0, H1, H2 with H(λ) = H0 + λH1 + λ²H2 exactly.

    H0 is the Peierls background operator, H1 = Σ_a (Dᵃ A_Λa + A_Λa Dᵃ) with
    Dᵃ the centered magnetic difference i∂_a + εA0_a (background phases at
    link midpoints, disorder field averaged onto midpoints), and
    H2 = A_Λ·A_Λ as a site-diagonal multiplication.  Each part is Hermitian.
    """
    v_site, a0_site, a_dis = _site_fields(geometry, background, profile, realization)
    h = geometry.spacing
    d = geometry.dimension
    n = geometry.n_sites

    alpha0 = np.stack([-h * _midpoint(a0_site[a], a) for a in range(d)])
    mat0 = _build_phase_operator(geometry, "edge_laplacian", alpha0, v_site, scale=1.0 / h**2)
    h0 = MagneticOperator(
        kind="continuum_fd", geometry=geometry, matrix=mat0,
        edge_potential=alpha0, metadata={"part": "H0", "eps": background.coupling_eps},
    )

    rows, cols, data = [], [], []
    for a in range(d):
        # hop coefficient (i/h) U0_a(x) Ābar_Λa(x); conjugate on the reversed edge
        hop = (1j / h) * np.exp(1j * alpha0[a]) * _midpoint(a_dis[a], a)
        r, c, v = _hop_terms(geometry, a, hop)
        rows.extend([r, c])
        cols.extend([c, r])
        data.extend([v, np.conj(v)])
    mat1 = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()
    mat1.sum_duplicates()
    h1 = MagneticOperator(
        kind="continuum_fd", geometry=geometry, matrix=mat1,
        edge_potential=None, metadata={"part": "H1"},
    )

    mat2 = sp.diags(np.sum(a_dis**2, axis=0).ravel().astype(complex)).tocsr()
    h2 = MagneticOperator(
        kind="continuum_fd", geometry=geometry, matrix=mat2,
        edge_potential=None, metadata={"part": "H2"},
    )
    for part in (h0, h1, h2):
        _check_hermitian(part)
    return h0, h1, h2


def apply_gauge(op: MagneticOperator, chi: np.ndarray) -> MagneticOperator:
    """Conjugate by the diagonal unitary e^{iχ}; link phases pick up e^{i(χ(y)-χ(x))}."""
    chi = np.asarray(chi, dtype=float)
    if chi.shape != op.geometry.sides:
        if chi.size == op.n:
            chi = chi.reshape(op.geometry.sides)
        else:
            raise ShapeError(f"chi shape {chi.shape} does not cover every site {op.geometry.sides}")
    u = np.exp(1j * chi.ravel())
    mat = sp.diags(np.conj(u)) @ op.matrix @ sp.diags(u)
    alpha = None
    if op.edge_potential is not None:
        alpha = np.stack(
            [
                op.edge_potential[a] + np.roll(chi, -1, axis=a) - chi
                for a in range(op.geometry.dimension)
            ]
        )
    return MagneticOperator(
        kind=op.kind, geometry=op.geometry, matrix=mat.tocsr(),
        edge_potential=alpha, metadata=dict(op.metadata, gauged=True),
    )


def _wrap_angle(x):
    """Reduce to (-π, π]."""
    out = np.remainder(-np.asarray(x) + np.pi, 2 * np.pi)
    return -(out - np.pi)


def plaquette_flux(op: MagneticOperator, plaquette) -> float:
    """Boundary sum Σ_{e∈∂F} A(e) for one face, reduced to (-π, π].

    ``plaquette`` is ``(site, (a, b))`` with ``site`` the flat index or grid
    multi-index of the face's base corner and a < b the two axes spanning it.
    """
    g = op.geometry
    if g.dimension < 2:
        raise ModelError("plaquette flux needs dimension >= 2")
    site, axes = plaquette
    a, b = axes
    if not (0 <= a < g.dimension and 0 <= b < g.dimension and a != b):
        raise ShapeError(f"invalid plaquette axes {axes} in dimension {g.dimension}")
    if np.isscalar(site):
        idx = np.unravel_index(int(site), g.sides)
    else:
        idx = tuple(int(c) % s for c, s in zip(site, g.sides))
    fluxes = all_plaquette_fluxes(op, (a, b))
    return float(fluxes[idx])


def all_plaquette_fluxes(op: MagneticOperator, axes: tuple[int, int]) -> np.ndarray:
    """Fluxes of every (a,b) face, indexed by the base corner, in (-π, π]."""
    g = op.geometry
    if g.dimension < 2:
        raise ModelError("plaquette flux needs dimension >= 2")
    a, b = axes
    alpha = op.edge_potential
    if alpha is None:
        raise ModelError("operator carries no edge potential; fluxes undefined")
    total = (
        alpha[a]
        + np.roll(alpha[b], -1, axis=a)
        - np.roll(alpha[a], -1, axis=b)
        - alpha[b]
    )
    return _wrap_angle(total)


def open_chain_1d(
    n: int, alpha: np.ndarray, site_potential: np.ndarray | None = None
) -> np.ndarray:
    """Dense 1-D open-chain edge Laplacian, the only non-periodic test fixture.

    ``alpha`` holds the n-1 bond phases A((x, x+1)).
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (n - 1,):
        raise ShapeError(f"need {n - 1} bond values for an open chain of {n} sites")
    mat = np.zeros((n, n), dtype=complex)
    np.fill_diagonal(mat, 2.0)
    mat[0, 0] = mat[-1, -1] = 1.0
    hop = -np.exp(1j * alpha)
    mat[np.arange(n - 1), np.arange(1, n)] = hop
    mat[np.arange(1, n), np.arange(n - 1)] = np.conj(hop)
    if site_potential is not None:
        mat[np.arange(n), np.arange(n)] += np.asarray(site_potential, dtype=float)
    return mat
