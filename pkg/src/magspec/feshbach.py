"""Feshbach (Schur) reduction at gap energies, the quartic expansion of the
effective operator, the disorder vector-field identity with its remainder
chain, and Monte-Carlo probes of the Wegner bound.

Everything here works on the dense λ-split H(λ) = H0 + λH1 + λ²H2 with
spectral projectors P± of H0 at the gap (threshold at the gap midpoint).
For the upper-edge analysis P = P- and Q = P+, the reduced resolvent R_P
carries the perturbation on the minus block, and the effective operator on
the plus block is 𝒢 = R0+^{1/2} (1 + Γ̃₊)^{-1} R0+^{1/2}.  Γ̃₊ equals
Σ_{j=1}^4 λ^j M_j exactly, with the full λ-dependent R_- inside the
coefficients; the scaling vector field Σ_j ω_j ∂_{ω_j} maps it to
Γ̃₊ + Σ_{j=2}^6 λ^j K_j.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError, ReductionInvalidError
from .spectral import nearest_eigenvalue, run_ensemble

SINGULAR_TOL = 1e-10


def _dense(op) -> np.ndarray:
    if hasattr(op, "matrix"):
        return op.matrix.toarray()
    if hasattr(op, "toarray"):
        return op.toarray()
    return np.asarray(op)


@dataclass
class FeshbachDecomposition:
    p_plus: np.ndarray
    p_minus: np.ndarray
    energy: complex
    delta_plus: float
    delta_minus: float
    effective_perturbation: np.ndarray   # 𝒱(λ)
    r_p: np.ndarray                      # reduced resolvent on the minus block
    g_block: np.ndarray                  # 𝒢(z) on the plus block
    gamma_plus: np.ndarray               # Γ̃₊ on the plus block (plus-basis)
    m_coeffs: list = field(default_factory=list)    # M1..M4 (plus-basis)
    k_coeffs: list = field(default_factory=list)    # K2..K6 (plus-basis)
    basis_plus: np.ndarray = None        # type: ignore[assignment]
    basis_minus: np.ndarray = None       # type: ignore[assignment]
    validity: dict = field(default_factory=dict)

    def resolvent_rhs(self) -> np.ndarray:
        """Assemble the right side of the block resolvent identity (full basis)."""
        up = self.basis_plus
        um = self.basis_minus
        q_full = up @ up.conj().T
        r_p_full = um @ self.r_p @ um.conj().T
        g_full = up @ self.g_block @ up.conj().T
        v = self.effective_perturbation
        left = q_full - r_p_full @ v @ q_full
        right = q_full - q_full @ v @ r_p_full
        return r_p_full + left @ g_full @ right

    def gamma_polynomial(self, lam: float) -> np.ndarray:
        """Σ λ^j M_j with the coefficients frozen at this decomposition."""
        out = np.zeros_like(self.gamma_plus)
        for j, m in enumerate(self.m_coeffs, start=1):
            out = out + lam**j * m
        return out


def _sqrt_resolvent(evals: np.ndarray, z: complex) -> np.ndarray:
    """Diagonal of (H0_block - z)^{-1/2}; complex branch when the block is below z."""
    return 1.0 / np.sqrt((evals - z).astype(complex))


def feshbach_reduce(
    h0, h1, h2, lam: float, z, gap: tuple[float, float],
    require_invertible: bool = True,
) -> FeshbachDecomposition:
    """Build the full decomposition at energy z (real in the gap, or complex).

    Projectors split at the gap midpoint of H0's spectrum.  Raises
    ReductionInvalidError when 1 + Γ̃₊ is numerically singular (the
    near-eigenvalue event) or when the minus-block inverse fails its
    smallness condition.  ``require_invertible=False`` skips the Γ̃₊
    singularity guard so the near-eigenvalue event itself can be probed.
    """
    h0d, h1d, h2d = _dense(h0), _dense(h1), _dense(h2)
    e_minus, e_plus = gap
    mid = 0.5 * (e_minus + e_plus)
    z = complex(z)
    if z.imag == 0.0:
        e0 = z.real
        if not (e_minus < e0 < e_plus):
            raise PreconditionError(
                f"real energy {e0} must lie inside the gap ({e_minus}, {e_plus})"
            )

    evals, evecs = np.linalg.eigh(h0d)
    minus_sel = evals < mid
    plus_sel = ~minus_sel
    um = evecs[:, minus_sel]
    up = evecs[:, plus_sel]
    ev_m = evals[minus_sel]
    ev_p = evals[plus_sel]
    if um.shape[1] == 0 or up.shape[1] == 0:
        raise PreconditionError("spectral split is trivial; H0 has no states on one side")

    delta_minus = float(np.min(np.abs(z - ev_m.astype(complex))))
    delta_plus = float(np.min(np.abs(ev_p.astype(complex) - z)))

    v = lam * h1d + lam**2 * h2d
    v_mm = um.conj().T @ v @ um
    v_pp = up.conj().T @ v @ up
    v_pm = up.conj().T @ v @ um
    v_mp = v_pm.conj().T

    # minus-block reduced resolvent, with its factorized validity check
    sq_m = _sqrt_resolvent(ev_m, z)
    inner_m = np.eye(um.shape[1]) + (sq_m[:, None] * v_mm) * sq_m[None, :]
    sv_min_m = float(np.min(np.linalg.svd(inner_m, compute_uv=False)))
    rho_minus = float(np.linalg.norm((sq_m[:, None] * v_mm) * sq_m[None, :], 2))
    if sv_min_m < SINGULAR_TOL:
        raise ReductionInvalidError(
            "minus-block factor 1 + R^{1/2} V R^{1/2} numerically singular",
            smallest_singular_value=sv_min_m,
        )
    r_p = (sq_m[:, None] * np.linalg.solve(inner_m, np.diag(sq_m))).astype(complex)

    # plus-block effective operator
    sq_p = _sqrt_resolvent(ev_p, z)
    core = v_pp - v_pm @ r_p @ v_mp
    gamma = (sq_p[:, None] * core) * sq_p[None, :]
    one_plus = np.eye(up.shape[1]) + gamma
    sv_min = float(np.min(np.linalg.svd(one_plus, compute_uv=False)))
    if require_invertible and sv_min < SINGULAR_TOL:
        raise ReductionInvalidError(
            f"1 + Γ̃₊ numerically singular (smallest singular value {sv_min:.3e}); "
            "z is within the near-eigenvalue event of the reduction",
            smallest_singular_value=sv_min,
        )
    if sv_min >= SINGULAR_TOL:
        g_block = (sq_p[:, None] * np.linalg.solve(one_plus, np.diag(sq_p))).astype(complex)
    else:
        g_block = (sq_p[:, None] * (np.linalg.pinv(one_plus) @ np.diag(sq_p))).astype(complex)

    # quartic coefficients, full λ-dependent R_- inside
    h1_pp = up.conj().T @ h1d @ up
    h2_pp = up.conj().T @ h2d @ up
    h1_pm = up.conj().T @ h1d @ um
    h2_pm = up.conj().T @ h2d @ um
    h1_mp = h1_pm.conj().T
    h2_mp = h2_pm.conj().T

    def sandwich(x):
        return (sq_p[:, None] * x) * sq_p[None, :]

    m1 = sandwich(h1_pp)
    m2 = sandwich(h2_pp - h1_pm @ r_p @ h1_mp)
    m3 = -sandwich(h1_pm @ r_p @ h2_mp + h2_pm @ r_p @ h1_mp)
    m4 = -sandwich(h2_pm @ r_p @ h2_mp)

    h1_mm = um.conj().T @ h1d @ um
    h2_mm = um.conj().T @ h2d @ um
    k2 = m2
    k3 = 2.0 * m3 + sandwich(h1_pm @ r_p @ h1_mm @ r_p @ h1_mp)
    k4 = 3.0 * m4 + sandwich(
        2.0 * (h1_pm @ r_p @ h2_mm @ r_p @ h1_mp)
        + h1_pm @ r_p @ h1_mm @ r_p @ h2_mp
        + h2_pm @ r_p @ h1_mm @ r_p @ h1_mp
    )
    k5 = sandwich(
        2.0 * (h1_pm @ r_p @ h2_mm @ r_p @ h2_mp)
        + 2.0 * (h2_pm @ r_p @ h2_mm @ r_p @ h1_mp)
        + h2_pm @ r_p @ h1_mm @ r_p @ h2_mp
    )
    k6 = sandwich(2.0 * (h2_pm @ r_p @ h2_mm @ r_p @ h2_mp))

    return FeshbachDecomposition(
        p_plus=up @ up.conj().T,
        p_minus=um @ um.conj().T,
        energy=z,
        delta_plus=delta_plus,
        delta_minus=delta_minus,
        effective_perturbation=v,
        r_p=r_p,
        g_block=g_block,
        gamma_plus=gamma,
        m_coeffs=[m1, m2, m3, m4],
        k_coeffs=[k2, k3, k4, k5, k6],
        basis_plus=up,
        basis_minus=um,
        validity={
            "rho_minus": rho_minus,
            "min_sv_one_plus_gamma": sv_min,
            "min_sv_minus_factor": sv_min_m,
        },
    )


def identity_residuals(h0, h1, h2, lam: float, z, gap) -> dict:
    """Relative residuals of the block-resolvent identity and its factors."""
    dec = feshbach_reduce(h0, h1, h2, lam, z, gap)
    h0d, h1d, h2d = _dense(h0), _dense(h1), _dense(h2)
    h_full = h0d + lam * h1d + lam**2 * h2d
    n = h_full.shape[0]
    r_exact = np.linalg.inv(h_full - complex(z) * np.eye(n))
    rhs = dec.resolvent_rhs()
    res_resolvent = np.linalg.norm(rhs - r_exact, 2) / np.linalg.norm(r_exact, 2)

    # 𝒢 against its defining inverse on the plus block
    up, um = dec.basis_plus, dec.basis_minus
    v = dec.effective_perturbation
    g_def = np.linalg.inv(
        up.conj().T @ (h0d + v) @ up
        - complex(z) * np.eye(up.shape[1])
        - up.conj().T @ v @ um @ dec.r_p @ um.conj().T @ v @ up
    )
    res_g = np.linalg.norm(dec.g_block - g_def, 2) / np.linalg.norm(g_def, 2)

    gamma_poly = dec.gamma_polynomial(lam)
    res_gamma = float(np.linalg.norm(dec.gamma_plus - gamma_poly, 2))
    herm = float(
        np.linalg.norm(dec.gamma_plus - dec.gamma_plus.conj().T, 2)
    )
    return {
        "resolvent": float(res_resolvent),
        "g_inverse": float(res_g),
        "gamma_expansion": res_gamma,
        "gamma_hermiticity": herm,
        "decomposition": dec,
    }


def gamma_degree_check(dec: FeshbachDecomposition, lam: float, step: float = 0.02) -> float:
    """Fifth finite difference of the frozen-coefficient polynomial; ~0 for degree 4."""
    signs = np.array([1, -5, 10, -10, 5, -1], dtype=float)
    acc = np.zeros_like(dec.gamma_plus)
    for k, c in enumerate(signs):
        acc = acc + c * dec.gamma_polynomial(lam + (2.5 - k) * step)
    return float(np.linalg.norm(acc, 2))


# ---------------------------------------------------------------------------
# disorder vector field

def vectorfield_check(
    family,
    omegas: np.ndarray,
    lam: float,
    e0: float,
    gap,
    fd_step: float = 1e-5,
    richardson: bool = True,
) -> dict:
    """Check Σ_j ω_j ∂Γ̃₊/∂ω_j = Γ̃₊ + Σ λ^j K_j by centered finite differences.

    ``family(omegas)`` must return the split (H0, H1, H2) at that coupling
    configuration.  The derivative side is assembled by differencing the full
    Γ̃₊(ω) map coordinate by coordinate (one Richardson pass by default).
    """
    omegas = np.asarray(omegas, dtype=float).ravel()

    def gamma_at(w):
        h0, h1, h2 = family(w)
        return feshbach_reduce(h0, h1, h2, lam, e0, gap).gamma_plus

    def euler_fd(step):
        acc = None
        for j in range(omegas.size):
            scale = step * max(1.0, abs(omegas[j]))
            if scale < 1e-300:
                raise PreconditionError("finite-difference step underflows the ω scale")
            wp = omegas.copy()
            wm = omegas.copy()
            wp[j] += scale
            wm[j] -= scale
            deriv = (gamma_at(wp) - gamma_at(wm)) / (2 * scale)
            term = omegas[j] * deriv
            acc = term if acc is None else acc + term
        return acc

    lhs = euler_fd(fd_step)
    if richardson:
        lhs_half = euler_fd(fd_step / 2)
        lhs = (4.0 * lhs_half - lhs) / 3.0

    dec = feshbach_reduce(*family(omegas), lam, e0, gap)
    rhs = dec.gamma_plus.copy()
    for j, k in enumerate(dec.k_coeffs, start=2):
        rhs = rhs + lam**j * k
    residual = float(np.linalg.norm(lhs - rhs, 2))
    return {
        "lhs": lhs,
        "rhs": rhs,
        "residual": residual,
        "remainder_norms": [float(np.linalg.norm(k, 2)) for k in dec.k_coeffs],
        "decomposition": dec,
    }


def remainder_sum(dec: FeshbachDecomposition, lam: float) -> float:
    """Σ_{j=2}^6 λ^j ‖K_j‖, the quantity bounded by Cλ²/δ+(E0)."""
    return float(
        sum(lam**j * np.linalg.norm(k, 2) for j, k in enumerate(dec.k_coeffs, start=2))
    )


def near_eigenvalue_events(
    h0, h1, h2, lam: float, e0: float, gap, eta: float
) -> tuple[bool, bool]:
    """The two sides of the near-eigenvalue equivalence chain.

    Returns (dist(σ(H(λ)), E0) < η,  dist(σ(Γ̃₊), -1) < 8η/δ+(E0)).  The
    stated inequality direction is first ⟹ second; an ensemble should
    produce zero violations of it inside the reduction's validity regime.
    """
    h0d = _dense(h0)
    h1d = _dense(h1)
    h2d = _dense(h2)
    h_full = h0d + lam * h1d + lam**2 * h2d
    dist_h = float(np.min(np.abs(np.linalg.eigvalsh(h_full) - e0)))
    dec = feshbach_reduce(h0, h1, h2, lam, e0, gap, require_invertible=False)
    gamma_evals = np.linalg.eigvalsh(0.5 * (dec.gamma_plus + dec.gamma_plus.conj().T))
    dist_gamma = float(np.min(np.abs(gamma_evals + 1.0)))
    return dist_h < eta, dist_gamma < 8.0 * eta / dec.delta_plus


# ---------------------------------------------------------------------------
# Wegner probe

def wilson_interval(hits: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if trials == 0:
        return 0.0, 1.0
    p = hits / trials
    denom = 1 + z**2 / trials
    center = (p + z**2 / (2 * trials)) / denom
    half = (z / denom) * np.sqrt(p * (1 - p) / trials + z**2 / (4 * trials**2))
    lo = 0.0 if hits == 0 else max(0.0, center - half)
    hi = 1.0 if hits == trials else min(1.0, center + half)
    return float(lo), float(hi)


@dataclass
class WegnerProbe:
    e0: float
    eta: float
    q: float
    lam: float
    volume: int
    hits: int
    trials: int

    @property
    def p_hat(self) -> float:
        return self.hits / self.trials if self.trials else 0.0

    @property
    def wilson(self) -> tuple[float, float]:
        return wilson_interval(self.hits, self.trials)


def wegner_mc(
    model_factory,
    e0: float,
    etas,
    q: float,
    volumes,
    ensemble_size: int,
    lam: float,
    master_seed: int = 11,
    gap: tuple[float, float] | None = None,
    workers: int = 1,
) -> dict:
    """Estimate p(η,|Λ|) = P{dist(σ(H_Λ(λ)), E0) ≤ η} on an (η, volume) grid.

    One windowed solve per realization yields dist(σ, E0); hit counts for
    every η reuse the same realizations, so monotonicity in η is exact.
    Returns the probe table plus the fitted constant of the bound
    p ≤ C η^{1/q} |Λ| and its per-cell 95% Wilson consistency verdicts.

    The bound is an upper envelope, so Ĉ is the least constant that
    dominates every cell's point estimate (an empirical p can be much
    steeper than η^{1/q} at small η without violating anything); the Wilson
    check then asks whether any cell's lower confidence bound still exceeds
    its Ĉ-envelope value.
    """
    etas = np.asarray(sorted(etas), dtype=float)
    if q <= 1:
        raise PreconditionError(f"the modulus exponent q must be > 1, got {q}")
    if gap is not None:
        lo, hi = gap
        if not (lo < e0 - 2 * etas[-1] and e0 + 2 * etas[-1] < hi):
            raise PreconditionError(
                f"[E0 - 2η, E0 + 2η] = [{e0 - 2*etas[-1]:.6g}, {e0 + 2*etas[-1]:.6g}] "
                f"must sit inside the gap ({lo:.6g}, {hi:.6g})"
            )
    probes: list[WegnerProbe] = []
    for volume_sides in volumes:
        model = model_factory(volume_sides)
        n_sites = model.geometry.n_sites

        def one_distance(i):
            op = model.operator(lam, index=i, master_seed=master_seed)
            return abs(nearest_eigenvalue(op, e0) - e0)

        result = run_ensemble(one_distance, ensemble_size, workers=workers)
        distances = np.array(result.values)
        for eta in etas:
            hits = int(np.sum(distances <= eta))
            probes.append(
                WegnerProbe(
                    e0=e0, eta=float(eta), q=q, lam=lam,
                    volume=n_sites, hits=hits, trials=len(distances),
                )
            )

    # least dominating constant over the nonzero cells
    ratios = [
        p.p_hat / (p.eta ** (1.0 / q) * p.volume) for p in probes if p.hits > 0
    ]
    degenerate = len(ratios) == 0
    c_hat = float(max(ratios)) if ratios else 0.0
    consistent = []
    for p in probes:
        lo_ci, _ = p.wilson
        bound = c_hat * p.eta ** (1.0 / q) * p.volume
        consistent.append(bool(lo_ci <= bound))
    return {
        "probes": probes,
        "c_hat": c_hat,
        "degenerate": degenerate,
        "consistent_95": consistent,
        "all_consistent": all(consistent),
    }


# ---------------------------------------------------------------------------
# Hölder modulus of the IDS

def holder_ids(curve, interval: tuple[float, float], q: float, sigma_h0=None) -> dict:
    """Empirical sup over grid pairs of |N(E) - N(E')| / |E - E'|^{1/q}.

    ``sigma_h0`` (eigenvalues of the unperturbed operator), when given, is
    used to enforce that the closed interval avoids σ(H0).
    """
    lo, hi = interval
    if not lo < hi:
        raise PreconditionError(f"empty interval {interval}")
    if sigma_h0 is not None:
        sigma = np.asarray(sigma_h0)
        inside = (sigma >= lo) & (sigma <= hi)
        if np.any(inside):
            raise PreconditionError(
                f"interval {interval} meets the unperturbed spectrum"
            )
    sel = (curve.energy_grid >= lo) & (curve.energy_grid <= hi)
    energies = curve.energy_grid[sel]
    values = curve.values[sel]
    if energies.size < 2:
        raise PreconditionError("fewer than two grid points inside the interval")
    de = np.abs(energies[:, None] - energies[None, :])
    dn = np.abs(values[:, None] - values[None, :])
    mask = de > 0
    ratios = np.zeros_like(de)
    ratios[mask] = dn[mask] / de[mask] ** (1.0 / q)
    return {
        "constant": float(np.max(ratios)),
        "points": int(energies.size),
        "interval": (float(lo), float(hi)),
        "q": float(q),
    }
