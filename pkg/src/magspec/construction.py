"""Sign-definiteness certificates for the disorder coupling at a gap edge.

Implements the constructive recipe: starting from a real edge Floquet
eigenfunction ψ0 at θ0, build the periodic vector potential
A0 = ∇⊥(ψ0²) with a constant-coefficient skew field ∇⊥, verify that the
symmetrized current operator A0·i∇ + i∇·A0 annihilates ψ0 (so the
first-order eigenfunction correction vanishes), and produce a single-site
profile u whose first-order matrix of current matrix elements against the
edge eigenfunctions is sign-definite.

All cell derivatives are centered differences with the Bloch wrap phase of
the function being differentiated; integrals are the trapezoid rule on the
periodic cell (a plain h^d-weighted sum).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bloch import EdgeState, cell_operator_pieces, fold_theta
from .errors import ModelError, PreconditionError, ShapeError, HypothesisError
from .fields import PeriodicBackground, SingleSiteProfile
from .geometry import LatticeGeometry

COLLINEAR_TOL = 1e-8
HALF_LATTICE_TOL = 1e-8


# ---------------------------------------------------------------------------
# twisted cell calculus

def _shifted(f: np.ndarray, axis: int, step: int, tau: float) -> np.ndarray:
    """f(r ± e_axis) on the cell, with the Bloch phase across the wrap."""
    if step == +1:
        out = np.roll(f, -1, axis=axis).astype(complex)
        sel = [slice(None)] * f.ndim
        sel[axis] = f.shape[axis] - 1
        out[tuple(sel)] *= np.exp(1j * tau)
    else:
        out = np.roll(f, 1, axis=axis).astype(complex)
        sel = [slice(None)] * f.ndim
        sel[axis] = 0
        out[tuple(sel)] *= np.exp(-1j * tau)
    return out


def cell_diff(
    f: np.ndarray, geometry: LatticeGeometry, theta, axis: int
) -> np.ndarray:
    """Centered difference along one axis with twist θ for the function f."""
    tau = float(np.asarray(theta, dtype=float)[axis] * geometry.cell_span[axis])
    h = geometry.spacing
    return (_shifted(f, axis, +1, tau) - _shifted(f, axis, -1, tau)) / (2 * h)


def current_apply(
    u: np.ndarray, f: np.ndarray, geometry: LatticeGeometry, theta
) -> np.ndarray:
    """(u·i∇ + i∇·u) f with centered twisted differences."""
    out = np.zeros(f.shape, dtype=complex)
    for a in range(geometry.dimension):
        out += u[a] * (1j * cell_diff(f, geometry, theta, a))
        out += 1j * cell_diff(u[a] * f, geometry, theta, a)
    return out


def cell_integral(f: np.ndarray, geometry: LatticeGeometry) -> complex:
    """Trapezoid rule on the periodic cell."""
    return complex(np.sum(f) * geometry.spacing**geometry.dimension)


def l2cell_norm(f: np.ndarray, geometry: LatticeGeometry) -> float:
    return float(np.sqrt(np.real(cell_integral(np.abs(f) ** 2, geometry))))


def phase_align(v: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Rotate v by the global phase maximizing Re⟨ref, v⟩."""
    inner = np.vdot(ref, v)
    if abs(inner) == 0:
        return v
    return v * np.exp(-1j * np.angle(inner))


# ---------------------------------------------------------------------------
# Lemma-style reality diagnostics

def reality_check(psi0: np.ndarray, theta0=None, geometry: LatticeGeometry | None = None) -> dict:
    """Best global phase making ψ0 real, from the (Re, Im) second-moment matrix.

    collinear ⇔ the minimized residual ‖Im(e^{-iφ}ψ0)‖/‖ψ0‖ is ≤ 1e-8.  When
    collinear and θ0 is supplied, membership of θ0 in the half dual lattice
    (every twist angle ≡ 0 or π mod 2π) is cross-checked.
    """
    psi = np.asarray(psi0).ravel()
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise PreconditionError("psi0 vanishes; reality check undefined")
    re, im = psi.real, psi.imag
    g = np.array(
        [[re @ re, -(re @ im)], [-(re @ im), im @ im]]
    )
    evals, evecs = np.linalg.eigh(g)
    s, c = evecs[:, 0]
    phase = float(np.arctan2(s, c))
    residual = float(np.sqrt(max(evals[0], 0.0)) / norm)
    report = {
        "collinear": residual <= COLLINEAR_TOL,
        "phase": phase,
        "residual": residual,
    }
    if theta0 is not None and geometry is not None:
        # each twist angle must be ≡ 0 or π (mod 2π)
        taus = np.asarray(theta0, dtype=float) * np.array(geometry.cell_span)
        comp = np.remainder(taus, 2 * np.pi)
        report["theta_in_half_dual_lattice"] = bool(
            np.all(
                (np.abs(comp) < HALF_LATTICE_TOL)
                | (np.abs(comp - np.pi) < HALF_LATTICE_TOL)
                | (np.abs(comp - 2 * np.pi) < HALF_LATTICE_TOL)
            )
        )
    return report


def realified(psi0: np.ndarray) -> np.ndarray:
    """e^{-iφ*}ψ0 as a real array; raises if ψ0 is not phase-collinear to real."""
    rep = reality_check(psi0)
    if not rep["collinear"]:
        raise ModelError(
            f"edge eigenfunction is not collinear to a real function "
            f"(residual {rep['residual']:.3e}); the ∇⊥ construction needs a real ψ0"
        )
    return np.real(np.exp(-1j * rep["phase"]) * psi0)


# ---------------------------------------------------------------------------
# ∇⊥ construction

@dataclass(frozen=True)
class PerpField:
    """Constant-coefficient skew field: (∇⊥ f)_i = Σ_j M_ij ∂_j f."""

    skew_matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.skew_matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError(f"skew matrix must be square, got {m.shape}")
        if np.max(np.abs(m + m.T)) != 0.0:
            raise ModelError("perp field matrix must be exactly skew-symmetric")
        if not np.any(m != 0.0):
            raise ModelError("perp field matrix must have a nonzero entry")
        object.__setattr__(self, "skew_matrix", m)


def default_perp(dimension: int, axes: tuple[int, int] = (0, 1)) -> PerpField:
    """The rotation pair (-∂_2, ∂_1) in d=2; a user-selected axis pair in d=3."""
    if dimension < 2:
        raise ModelError("∇⊥ needs dimension >= 2")
    m = np.zeros((dimension, dimension))
    a, b = axes
    m[a, b] = -1.0
    m[b, a] = 1.0
    return PerpField(m)


def perp_apply(
    perp: PerpField, f: np.ndarray, geometry: LatticeGeometry, theta
) -> np.ndarray:
    grads = [cell_diff(f, geometry, theta, a) for a in range(geometry.dimension)]
    return np.stack(
        [
            sum(perp.skew_matrix[i, j] * grads[j] for j in range(geometry.dimension))
            for i in range(geometry.dimension)
        ]
    )


def _require_half_lattice(geometry: LatticeGeometry, theta0) -> None:
    taus = np.asarray(theta0, dtype=float) * np.array(geometry.cell_span)
    comp = np.remainder(taus, 2 * np.pi)
    ok = np.all(
        (np.abs(comp) < HALF_LATTICE_TOL)
        | (np.abs(comp - np.pi) < HALF_LATTICE_TOL)
        | (np.abs(comp - 2 * np.pi) < HALF_LATTICE_TOL)
    )
    if not ok:
        raise ModelError(
            f"θ0 with twist angles {taus} is not in the half dual lattice; "
            "ψ0² is then not cell-periodic and ∇⊥(ψ0²) is not a periodic field"
        )


def perp_construct(
    state: EdgeState, geometry: LatticeGeometry, perp: PerpField | None = None
) -> np.ndarray:
    """A0 = ∇⊥(ψ0²) on the cell grid; real, cell-periodic, divergence-free.

    ψ0 is canonicalized to unit L²(cell) norm first: the construction is
    quadratic in ψ0, and the mesh-independent normalization is what makes
    A0's magnitude (and every downstream O(h²) statement) h-independent.
    """
    if perp is None:
        perp = default_perp(geometry.dimension)
    _require_half_lattice(geometry, state.theta)
    psi = state.vector.reshape(geometry.cell)
    psi = psi / l2cell_norm(psi, geometry)
    f = realified(psi)
    zero = np.zeros(geometry.dimension)
    perp_grad_f = perp_apply(perp, f, geometry, zero)
    if np.max(np.abs(perp_grad_f)) <= 1e-12 * max(np.max(np.abs(f)), 1e-300):
        raise ModelError(
            "∇⊥ψ0 vanishes identically for this skew matrix; "
            "choose a different PerpField"
        )
    a0 = perp_apply(perp, f * f, geometry, zero)
    return np.real(a0)


def cell_divergence(a: np.ndarray, geometry: LatticeGeometry) -> np.ndarray:
    out = np.zeros(geometry.cell, dtype=complex)
    zero = np.zeros(geometry.dimension)
    for i in range(geometry.dimension):
        out += cell_diff(a[i], geometry, zero, i)
    return out


def annihilation_check(a0: np.ndarray, state: EdgeState, geometry: LatticeGeometry) -> float:
    """‖(A0·i∇ + i∇·A0)ψ0‖₂ / ‖ψ0‖₂ on the cell; O(h²) for constructed A0."""
    a0 = np.asarray(a0)
    if a0.shape != (geometry.dimension,) + geometry.cell:
        raise ShapeError(f"A0 shape {a0.shape} does not match the cell grid")
    psi = state.vector.reshape(geometry.cell)
    norm = np.linalg.norm(psi)
    if norm <= 1e-300:
        raise PreconditionError("psi0 vanishes; annihilation residual undefined")
    t = current_apply(a0, psi, geometry, state.theta)
    return float(np.linalg.norm(t) / norm)


# ---------------------------------------------------------------------------
# condition matrix

@dataclass
class ConditionMatrix:
    entries: np.ndarray
    minimizers: np.ndarray
    definiteness: str          # positive | negative | indefinite | singular
    margin: float              # smallest |eigenvalue| of the Hermitian part

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.entries, 2)) if self.entries.size else 0.0


DEFINITE_MARGIN_REL = 1e-6
SINGULAR_ABS_FLOOR = 1e-12


def _classify(entries: np.ndarray) -> tuple[str, float]:
    herm = 0.5 * (entries + entries.conj().T)
    evals = np.linalg.eigvalsh(herm)
    norm = max(float(np.max(np.abs(evals))), 0.0)
    margin = float(np.min(np.abs(evals)))
    if norm <= SINGULAR_ABS_FLOOR or margin <= DEFINITE_MARGIN_REL * norm:
        return "singular", margin
    if np.all(evals > 0):
        return "positive", margin
    if np.all(evals < 0):
        return "negative", margin
    return "indefinite", margin


def condition_matrix(
    states: list[EdgeState],
    background: PeriodicBackground,
    geometry: LatticeGeometry,
    profile: SingleSiteProfile,
) -> ConditionMatrix:
    """M_kk' = ∫_cell ((u·i∇ + i∇·u + 2ε u·A0) φ_k) conj(φ_k') dx.

    The eigenfunctions must be L²(cell)-normalized; ε and the periodic A0
    come from the background (the condition is evaluated with A0 replaced by
    εA0).  Hermiticity of the result relies on u vanishing on a boundary
    layer of the cell.
    """
    if len(states) == 0:
        raise PreconditionError("no edge states supplied (m = 0)")
    if profile.geometry.cell != geometry.cell:
        raise ShapeError("profile and geometry cells differ")
    eps = background.coupling_eps
    a0 = background.vector_potential
    u = profile.u
    m = len(states)
    entries = np.zeros((m, m), dtype=complex)
    psis = []
    for st in states:
        psi = st.vector.reshape(geometry.cell)
        norm = l2cell_norm(psi, geometry)
        if abs(norm - 1.0) > 1e-8:
            raise PreconditionError(
                f"edge eigenvector at θ={st.theta} is not L²(cell)-normalized "
                f"(norm {norm:.12f}); scale by h^(-d/2) first"
            )
        psis.append(psi)
    coupling = 2.0 * eps * np.sum(u * a0, axis=0)
    for k, st in enumerate(states):
        tk = current_apply(u, psis[k], geometry, st.theta) + coupling * psis[k]
        for kp in range(m):
            entries[k, kp] = cell_integral(tk * np.conj(psis[kp]), geometry)
    verdict, margin = _classify(entries)
    return ConditionMatrix(
        entries=entries,
        minimizers=np.array([st.theta for st in states]),
        definiteness=verdict,
        margin=margin,
    )


def condition_oracle(
    state: EdgeState,
    background: PeriodicBackground,
    geometry: LatticeGeometry,
    profile: SingleSiteProfile,
) -> float:
    """Independent 1x1 oracle: 2∫ u·[Re(i∇ψ conj(ψ)) + εA0 |ψ|²] dx."""
    psi = state.vector.reshape(geometry.cell)
    eps = background.coupling_eps
    a0 = background.vector_potential
    grads = np.stack(
        [cell_diff(psi, geometry, state.theta, a) for a in range(geometry.dimension)]
    )
    density = np.real(1j * grads * np.conj(psi)) + eps * a0 * np.abs(psi) ** 2
    return float(np.real(cell_integral(2.0 * np.sum(profile.u * density, axis=0), geometry)))


# ---------------------------------------------------------------------------
# first-order eigenfunction correction

def normalized_edge_state(state: EdgeState, geometry: LatticeGeometry) -> EdgeState:
    """Rescale an ℓ²-normalized eigenvector to unit L²(cell) norm."""
    psi = state.vector.reshape(geometry.cell)
    scale = l2cell_norm(psi, geometry)
    return EdgeState(
        theta=state.theta,
        energy=state.energy,
        vector=(psi / scale).ravel(),
        band_index=state.band_index,
    )


def first_order_correction(
    background: PeriodicBackground,
    geometry: LatticeGeometry,
    state: EdgeState,
) -> tuple[np.ndarray, dict]:
    """Solve (H0(θ0) - E+) ψ0' = -(1 - π0)(A0·i∇ + i∇·A0) ψ0 with π0 ψ0' = 0.

    H0 is the ε=0 cell operator; the perturbation direction is the
    background's A0.  Returns ψ0' (same normalization convention as ψ0) and
    a diagnostics dict with the linear-system residual and ‖π0 ψ0'‖.
    """
    theta0, _ = fold_theta(geometry, state.theta)
    h0, h1, _ = cell_operator_pieces(background, geometry, theta0)
    psi0 = state.vector.ravel().astype(complex)
    e_plus = float(state.energy)

    evals = np.linalg.eigvalsh(h0)
    dist = np.abs(evals - e_plus)
    order = np.argsort(dist)
    if dist[order[0]] > 1e-8 * max(1.0, abs(e_plus)):
        raise PreconditionError(
            f"edge energy {e_plus} is not an eigenvalue of the ε=0 cell operator"
        )
    if dist[order[1]] < 1e-10:
        raise HypothesisError(
            "next eigenvalue within 1e-10 of the edge energy; the reduced system "
            "is ill-posed (simplicity hypothesis fails at this θ0)"
        )

    nrm = np.linalg.norm(psi0)
    unit = psi0 / nrm
    rhs = -(h1 @ psi0)
    rhs -= unit * (unit.conj() @ rhs)
    shifted = (h0 - e_plus * np.eye(h0.shape[0])) + np.outer(unit, unit.conj())
    psi1 = np.linalg.solve(shifted, rhs)
    psi1 -= unit * (unit.conj() @ psi1)
    resid = np.linalg.norm((h0 - e_plus * np.eye(h0.shape[0])) @ psi1 - rhs)
    proj = abs(unit.conj() @ psi1)
    return psi1, {"solve_residual": float(resid), "projection_residual": float(proj)}


def epsilon_taylor_residuals(
    background: PeriodicBackground,
    geometry: LatticeGeometry,
    state: EdgeState,
    psi1: np.ndarray,
    eps_values,
) -> np.ndarray:
    """‖ψ_ε - ψ0 - ε ψ0'‖ against full diagonalization, phase-aligned."""
    theta0, _ = fold_theta(geometry, state.theta)
    h0, h1, h2 = cell_operator_pieces(background, geometry, theta0)
    psi0 = state.vector.ravel().astype(complex)
    nrm0 = np.linalg.norm(psi0)
    out = []
    for eps in eps_values:
        mat = h0 + eps * h1 + eps**2 * h2
        vals, vecs = np.linalg.eigh(mat)
        overlaps = np.abs(psi0.conj() @ vecs)
        idx = int(np.argmax(overlaps))
        psi_eps = phase_align(vecs[:, idx], psi0) * nrm0
        out.append(np.linalg.norm(psi_eps - psi0 - eps * psi1))
    return np.array(out)
