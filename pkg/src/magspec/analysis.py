"""Statistical diagnostics on spectral data: Lifshitz-tail fitting,
finite-volume concentration near gap energies, boundary-localized resolvent
decay, and eigenvalue derivative checks in the disorder coupling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ModelError, PreconditionError
from .spectral import IDSCurve, count_in_window, run_ensemble, solve

_T95 = 1.959963984540054


@dataclass
class LifshitzFit:
    band_edge: float
    fit_window: tuple[float, float]
    log_energies: np.ndarray             # log(E - edge)
    loglog_values: np.ndarray            # log(-log(N - N(edge)))
    slope: float
    slope_ci: tuple[float, float]
    target: float
    n_points: int
    superpolynomial: dict                # n -> bool (ratio decreasing toward the edge)


def lifshitz_fit(
    curve: IDSCurve,
    edge: float,
    d: int,
    n_min: int = 10,
    upper_mass: float = 1e-2,
    max_ratio_violation: float = 0.0,
) -> LifshitzFit:
    """Double-log slope of the IDS just above a fluctuation band edge.

    The fit window keeps grid points whose excess mass N(E) - N(edge) lies in
    [n_min / (|Λ|·ensemble), upper_mass]: statistically resolved (at least
    n_min eigenvalue counts) yet still in the near-edge regime.  Also runs
    the superpolynomial vanishing check: (E-edge)^{-n} (N-N(edge)) must
    decrease toward the edge over the window for n = 1, 2, 3.
    """
    n_edge = curve.value_at(edge)
    excess = curve.values - n_edge
    above = curve.energy_grid > edge
    floor = n_min / (curve.volume * curve.ensemble_size)
    sel = above & (excess >= floor) & (excess <= upper_mass)
    if np.count_nonzero(sel) < 5:
        need = int(np.ceil(5 * n_min / (upper_mass * curve.volume)))
        raise PreconditionError(
            f"only {np.count_nonzero(sel)} resolvable grid points in the tail window; "
            f"roughly {need} realizations would be needed at this volume"
        )
    energies = curve.energy_grid[sel]
    mass = excess[sel]
    x = np.log(energies - edge)
    y = np.log(-np.log(mass))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    dof = max(x.size - 2, 1)
    se = np.sqrt(np.sum(resid**2) / dof / np.sum((x - x.mean()) ** 2))
    ci = (float(slope - _T95 * se), float(slope + _T95 * se))

    superpoly = {}
    for n in (1, 2, 3):
        ratio = mass / (energies - edge) ** n
        diffs = np.diff(ratio)   # toward increasing E; must be nondecreasing
        tol = max_ratio_violation * np.max(np.abs(ratio))
        superpoly[n] = bool(np.all(diffs >= -tol))
    return LifshitzFit(
        band_edge=float(edge),
        fit_window=(float(energies[0]), float(energies[-1])),
        log_energies=x,
        loglog_values=y,
        slope=float(slope),
        slope_ci=ci,
        target=-d / 2.0,
        n_points=int(x.size),
        superpolynomial=superpoly,
    )


def synthetic_lifshitz_curve(
    edge: float, d: int, grid: np.ndarray, volume: int = 10**9, ensemble: int = 10**6
) -> IDSCurve:
    """The exact double-log test curve N(E) = exp(-(E-edge)^{-d/2}) above the edge."""
    grid = np.asarray(grid, dtype=float)
    vals = np.zeros_like(grid)
    above = grid > edge
    vals[above] = np.exp(-((grid[above] - edge) ** (-d / 2.0)))
    return IDSCurve(grid, vals, volume, ensemble, np.zeros_like(grid))


# ---------------------------------------------------------------------------
# finite-volume concentration

@dataclass
class ConcentrationRow:
    side: int
    volume: int
    window: float
    expectation: float
    stderr: float
    prob_nonempty: float
    mean_count: float


def window_concentration(
    model_factory,
    e0: float,
    sides,
    ensemble_size: int,
    lam: float,
    master_seed: int = 13,
    gap: tuple[float, float] | None = None,
    workers: int = 1,
) -> list[ConcentrationRow]:
    """E[N_Λ(E0 + L^{-1/2}) - N_Λ(E0 - L^{-1/2})] across volumes Λ_L.

    Uses one windowed eigenvalue count per realization; also reports the
    empirical probability that the spectrum meets the window, which is
    bounded by the mean count (the Chebyshev/Markov step, an identity on
    counts).
    """
    rows = []
    for side in sides:
        window = side ** (-0.5)
        if gap is not None:
            lo, hi = gap
            if not (lo < e0 - window and e0 + window < hi):
                raise ModelError(
                    f"window [E0 ± {window:.4f}] does not fit inside the gap "
                    f"({lo:.4f}, {hi:.4f}) at L={side}"
                )
        model = model_factory(side)
        volume = model.geometry.n_sites

        def one_count(i):
            op = model.operator(lam, index=i, master_seed=master_seed)
            return count_in_window(op, e0 - window, e0 + window)

        res = run_ensemble(one_count, ensemble_size, workers=workers)
        counts = np.array(res.values, dtype=float)
        norm = counts / volume
        rows.append(
            ConcentrationRow(
                side=int(side),
                volume=volume,
                window=float(window),
                expectation=float(norm.mean()),
                stderr=float(norm.std(ddof=1) / np.sqrt(len(norm))) if len(norm) > 1 else 0.0,
                prob_nonempty=float(np.mean(counts >= 1)),
                mean_count=float(counts.mean()),
            )
        )
    return rows


# ---------------------------------------------------------------------------
# boundary-localized resolvent decay

@dataclass
class DecayProbe:
    side: int
    energy: float
    width: int
    core_radius: int
    norm: float
    distance_to_spectrum: float


def smooth_cutoff(geometry, width: int) -> np.ndarray:
    """Smoothstep 3t²-2t³ of the seam distance: 0 on the seam, 1 beyond width."""
    db = geometry.boundary_distance().astype(float)
    if width <= 0:
        return np.ones(geometry.sides)
    t = np.clip(db / width, 0.0, 1.0)
    return 3 * t**2 - 2 * t**3


def commutator_with_cutoff(op, g_field: np.ndarray) -> sp.csr_matrix:
    """W(g) = H g - g H; supported on links crossing the cutoff's level sets."""
    g = sp.diags(np.asarray(g_field, dtype=float).ravel())
    return (op.matrix @ g - g @ op.matrix).tocsr()


def resolvent_decay(
    op,
    energy: float,
    width: int | None = None,
    core_radius: int | None = None,
    min_distance: float = 1e-8,
) -> DecayProbe:
    """‖W(g_L) (H - E)^{-1} χ_core‖ with g_L the smooth seam cutoff.

    The energy must be separated from the spectrum (checked with a targeted
    solve first); the core indicator keeps sites at seam distance at least
    ``core_radius`` (default L/4), the cutoff transition width defaults to
    L/8 per side.
    """
    geometry = op.geometry
    side = min(geometry.sides)
    if width is None:
        width = max(1, side // 8)
    if core_radius is None:
        core_radius = max(width + 1, side // 4)
    from .spectral import nearest_eigenvalue

    dist = abs(nearest_eigenvalue(op, energy) - energy)
    if dist < min_distance:
        raise PreconditionError(
            f"energy {energy} is within {dist:.3e} of the spectrum; "
            f"the decay bound needs separation at least {min_distance}"
        )
    g_field = smooth_cutoff(geometry, width)
    w = commutator_with_cutoff(op, g_field)
    core = (geometry.boundary_distance() >= core_radius).ravel()
    if not np.any(core):
        raise ModelError(f"no core sites at seam distance >= {core_radius}")
    n = op.n
    cols = np.flatnonzero(core)
    rhs = np.zeros((n, cols.size))
    rhs[cols, np.arange(cols.size)] = 1.0
    dense = op.matrix.toarray() - energy * np.eye(n)
    x = np.linalg.solve(dense, rhs)
    norm = float(np.linalg.norm(w @ x, 2))
    return DecayProbe(
        side=side, energy=float(energy), width=int(width),
        core_radius=int(core_radius), norm=norm, distance_to_spectrum=float(dist),
    )


def decay_rate(probes: list[DecayProbe]) -> float:
    """Fitted γ from log-norm vs side length over two or more probes."""
    if len(probes) < 2:
        raise PreconditionError("need at least two volumes to fit a decay rate")
    sides = np.array([p.side for p in probes], dtype=float)
    norms = np.array([max(p.norm, 1e-300) for p in probes])
    slope = np.polyfit(sides, np.log(norms), 1)[0]
    return float(-slope)


# ---------------------------------------------------------------------------
# eigenvalue derivative in the coupling

@dataclass
class DerivativeReport:
    lam: float
    eigenvalue: float
    analytic: float
    finite_difference: float
    second_order_term: float
    second_order_bound: float
    h1_phi_norm: float


def _tracked_eigenpair(mat: np.ndarray, ref: np.ndarray):
    vals, vecs = np.linalg.eigh(mat)
    overlaps = np.abs(ref.conj() @ vecs)
    j = int(np.argmax(overlaps))
    if overlaps[j] ** 2 < 0.8:
        raise ModelError(
            "eigenvalue crossing within the finite-difference stencil "
            f"(best overlap² {overlaps[j]**2:.3f}); use a smaller step or track bands"
        )
    return vals[j], vecs[:, j]


def fh_derivative(
    split, j: int, lam: float, u_sup_norm_sq: float, step: float = 1e-5
) -> DerivativeReport:
    """Analytic ⟨φ_j, (H1 + 2λH2) φ_j⟩ against a Richardson finite difference.

    ``split`` is (H0, H1, H2); the eigenpair is tracked through the stencil
    by eigenvector overlap.  Also evaluates the second-order term and its
    bound 2λ‖u‖∞².
    """

    def _dense(x):
        if hasattr(x, "matrix"):
            x = x.matrix
        return x.toarray() if hasattr(x, "toarray") else np.asarray(x)

    h0, h1, h2 = (_dense(part) for part in split)

    def ham(mu):
        return h0 + mu * h1 + mu**2 * h2

    vals, vecs = np.linalg.eigh(ham(lam))
    if j < 0 or j >= vals.size:
        raise PreconditionError(f"eigenpair index {j} out of range")
    neighbors = np.abs(np.delete(vals, j) - vals[j])
    if neighbors.size and neighbors.min() <= 1e-8:
        raise PreconditionError(
            f"eigenvalue {j} is within {neighbors.min():.2e} of a neighbor; "
            "the derivative needs a simple eigenvalue"
        )
    phi = vecs[:, j]
    analytic = float(np.real(phi.conj() @ (h1 + 2 * lam * h2) @ phi))

    def central(delta):
        ep, _ = _tracked_eigenpair(ham(lam + delta), phi)
        em, _ = _tracked_eigenpair(ham(lam - delta), phi)
        return (ep - em) / (2 * delta)

    d1 = central(step)
    d2 = central(step / 2)
    fd = float((4 * d2 - d1) / 3)

    second = float(np.real(phi.conj() @ (2 * lam * h2) @ phi))
    bound = 2 * lam * u_sup_norm_sq
    h1_norm = float(np.linalg.norm(h1 @ phi))
    return DerivativeReport(
        lam=float(lam), eigenvalue=float(vals[j]), analytic=analytic,
        finite_difference=fd, second_order_term=second,
        second_order_bound=float(bound), h1_phi_norm=h1_norm,
    )
