"""Eigenvalue computation, finite-volume IDS, ensembles, and gap-edge tracking.

Dense Hermitian diagonalization up to ``DENSE_CAP`` sites; windowed and
extremal modes use ARPACK shift-invert with a deterministic start vector so
the whole engine is a pure function of its inputs.  Ensemble aggregation is
an index-keyed merge, independent of completion order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as dla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .disorder import constant_realization, sample_disorder
from .errors import CapacityError, ConvergenceError, ModelError, PreconditionError
from .operators import MagneticOperator

DENSE_CAP = 4096
WINDOW_EIGS_CAP = 512
RESIDUAL_RTOL = 1e-9


@dataclass
class SpectralResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None
    window: tuple[float, float] | None = None
    residuals: np.ndarray | None = None

    def __post_init__(self):
        order = np.argsort(self.eigenvalues)
        self.eigenvalues = np.asarray(self.eigenvalues)[order]
        if self.eigenvectors is not None:
            self.eigenvectors = np.asarray(self.eigenvectors)[:, order]
        if self.residuals is not None:
            self.residuals = np.asarray(self.residuals)[order]


def _as_sparse(op) -> sp.csr_matrix:
    if isinstance(op, MagneticOperator):
        return op.matrix
    if sp.issparse(op):
        return op.tocsr()
    return sp.csr_matrix(op)


def _scale(mat: sp.csr_matrix) -> float:
    return float(np.abs(mat.data).max()) if mat.nnz else 1.0


def _residuals(mat, vals, vecs) -> np.ndarray:
    if vecs is None or vecs.size == 0:
        return np.zeros(0)
    r = mat @ vecs - vecs * vals[None, :]
    return np.linalg.norm(r, axis=0) / np.maximum(np.linalg.norm(vecs, axis=0), 1e-300)


def _deterministic_v0(n: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(key=0xC0FFEE))
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def solve(
    op,
    mode: str = "full",
    window: tuple[float, float] | None = None,
    k: int = 6,
    which: str = "smallest",
    want_vectors: bool = False,
    dense_cap: int = DENSE_CAP,
    window_cap: int = WINDOW_EIGS_CAP,
) -> SpectralResult:
    """Eigensolve in one of three modes.

    full — dense Hermitian diagonalization (capacity ``dense_cap``);
    window — all eigenpairs in ``window`` by shift-invert iteration with
    certified residuals; extremal — the k smallest/largest by iteration.
    """
    mat = _as_sparse(op)
    n = mat.shape[0]
    if mode == "full":
        if n > dense_cap:
            raise CapacityError(
                f"dense solve capped at {dense_cap} sites, operator has {n}"
            )
        dense = mat.toarray()
        if want_vectors:
            vals, vecs = dla.eigh(dense)
            return SpectralResult(vals, vecs, residuals=_residuals(mat, vals, vecs))
        return SpectralResult(dla.eigh(dense, eigvals_only=True))
    if mode == "window":
        if window is None:
            raise PreconditionError("window mode needs a window interval")
        return _solve_window(mat, window, want_vectors, window_cap)
    if mode == "extremal":
        return _solve_extremal(mat, k, which, want_vectors)
    raise ModelError(f"unknown solve mode {mode!r}")


def _certify(mat, vals, vecs, context: str):
    res = _residuals(mat, vals, vecs)
    tol = RESIDUAL_RTOL * max(_scale(mat), 1.0)
    if res.size and res.max() > tol:
        raise ConvergenceError(
            f"{context}: eigenpair residual {res.max():.3e} above {tol:.3e}",
            best_residual=float(res.max()),
        )
    return res


def _factorized_opinv(mat, sigma):
    """One sparse LU of (H - σ) reused across Lanczos restarts."""
    n = mat.shape[0]
    ident = sp.identity(n, dtype=complex, format="csc")
    try:
        lu = spla.splu((mat - sigma * ident).tocsc())
    except RuntimeError:
        # σ can collide with an eigenvalue; a deterministic nudge fixes the LU
        sigma = sigma + 1e-8 * max(abs(sigma), 1.0)
        lu = spla.splu((mat - sigma * ident).tocsc())
    op = spla.LinearOperator((n, n), matvec=lu.solve, dtype=complex)
    return op, sigma


def _shift_invert(mat, sigma, k, opinv=None):
    n = mat.shape[0]
    k = min(k, n - 2)
    if opinv is None:
        opinv, sigma = _factorized_opinv(mat, sigma)
    # finite tol: Ritz pairs are certified against RESIDUAL_RTOL in the
    # original space afterwards; tol=0 stalls on clustered transformed spectra
    return spla.eigsh(
        mat, k=k, sigma=sigma, which="LM", v0=_deterministic_v0(n),
        OPinv=opinv, maxiter=5000, tol=1e-10,
    )


def _solve_window(mat, window, want_vectors, window_cap) -> SpectralResult:
    lo, hi = window
    if not lo < hi:
        raise PreconditionError(f"window must be an interval, got {window}")
    n = mat.shape[0]
    sigma = 0.5 * (lo + hi)
    if n <= 32:
        # too small for ARPACK bracketing; dense is exact here
        vals, vecs = dla.eigh(mat.toarray())
        keep = (vals >= lo) & (vals <= hi)
        vals, vecs = vals[keep], vecs[:, keep]
        res = _certify(mat, vals, vecs, "window(dense fallback)")
        return SpectralResult(vals, vecs if want_vectors else None, window, res)
    opinv, sigma = _factorized_opinv(mat, sigma)
    k = 8
    while True:
        vals, vecs = _shift_invert(mat, sigma, k, opinv=opinv)
        inside = (vals >= lo) & (vals <= hi)
        if np.any(vals > hi) and np.any(vals < lo):
            break
        if inside.sum() > window_cap:
            raise CapacityError(
                f"window {window} holds more than {window_cap} eigenvalues"
            )
        if 2 * k > n // 2:
            # the window swallows most of the spectrum; Lanczos with k ~ n
            # cannot certify completeness, but a dense solve can
            if n <= DENSE_CAP:
                vals, vecs = dla.eigh(mat.toarray())
                inside = (vals >= lo) & (vals <= hi)
                break
            raise CapacityError(
                f"window {window} needs k > {n // 2} of {n} eigenpairs; "
                "shrink the window or use slicing"
            )
        k = 2 * k
    vals_in = vals[inside]
    vecs_in = vecs[:, inside]
    res = _certify(mat, vals_in, vecs_in, "window")
    return SpectralResult(vals_in, vecs_in if want_vectors else None, window, res)


def spectrum_near(op, center: float, side: str, k0: int = 8):
    """First eigenvalue strictly above or below ``center``.

    The shift-invert Lanczos returns the k nearest eigenvalues to the
    center; as soon as one lands on the requested side it is provably the
    extreme one there.  Returns None if the whole spectrum sits on the
    other side.
    """
    mat = _as_sparse(op)
    n = mat.shape[0]
    if n <= 256:
        vals = dla.eigh(mat.toarray(), eigvals_only=True)
        sel = vals > center if side == "above" else vals < center
        if not np.any(sel):
            return None
        return float(vals[sel].min() if side == "above" else vals[sel].max())
    opinv, sigma = _factorized_opinv(mat, center)
    k = k0
    while True:
        vals, vecs = _shift_invert(mat, sigma, k, opinv=opinv)
        _certify(mat, vals, vecs, "spectrum_near")
        sel = vals > center if side == "above" else vals < center
        if np.any(sel):
            return float(vals[sel].min() if side == "above" else vals[sel].max())
        if k >= n - 2:
            return None
        k = min(2 * k, n - 2)


def _solve_extremal(mat, k, which, want_vectors) -> SpectralResult:
    n = mat.shape[0]
    if k >= n - 1 or n <= 64:
        vals, vecs = dla.eigh(mat.toarray())
        sel = np.arange(min(k, n)) if which == "smallest" else np.arange(n - min(k, n), n)
        res = _certify(mat, vals[sel], vecs[:, sel], "extremal(dense fallback)")
        return SpectralResult(vals[sel], vecs[:, sel] if want_vectors else None, None, res)
    arp_which = "SA" if which == "smallest" else "LA"
    vals, vecs = spla.eigsh(mat, k=k, which=arp_which, v0=_deterministic_v0(n), maxiter=5000)
    res = _certify(mat, vals, vecs, "extremal")
    return SpectralResult(vals, vecs if want_vectors else None, None, res)


def nearest_eigenvalue(op, e0: float, dense_cap: int = DENSE_CAP) -> float:
    """Eigenvalue closest to e0 (shift-invert; dense below 64 sites)."""
    mat = _as_sparse(op)
    n = mat.shape[0]
    if n <= 64:
        vals = dla.eigh(mat.toarray(), eigvals_only=True)
        return float(vals[np.argmin(np.abs(vals - e0))])
    vals, vecs = _shift_invert(mat, e0, k=min(4, n - 2))
    _certify(mat, vals, vecs, "nearest")
    return float(vals[np.argmin(np.abs(vals - e0))])


def count_in_window(op, lo: float, hi: float, dense_cap: int = DENSE_CAP) -> int:
    """Number of eigenvalues in [lo, hi].

    Fast path: one coarse shift-invert at the center returns the nearest
    eigenvalues; if even the nearest sits well outside the window, the
    window is empty.  Otherwise fall through to the fully certified
    windowed solve.
    """
    mat = _as_sparse(op)
    n = mat.shape[0]
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    if n > 256:
        opinv, sigma = _factorized_opinv(mat, center)
        k = min(8, n - 2)
        # coarse distances suffice: the certificate only compares against
        # 1.25x the half-width, far above the 1e-3 Ritz resolution
        vals, _ = spla.eigsh(
            mat, k=k, sigma=sigma, which="LM", v0=_deterministic_v0(n),
            OPinv=opinv, maxiter=5000, tol=1e-3,
        )
        dmin = float(np.min(np.abs(vals - center)))
        if dmin > 1.25 * half:
            return 0
    result = solve(op, mode="window", window=(lo, hi), dense_cap=dense_cap)
    return int(result.eigenvalues.size)


# ---------------------------------------------------------------------------
# IDS

@dataclass
class IDSCurve:
    energy_grid: np.ndarray
    values: np.ndarray
    volume: int                 # sites
    ensemble_size: int
    standard_errors: np.ndarray

    def __post_init__(self):
        self.energy_grid = np.asarray(self.energy_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.standard_errors = np.asarray(self.standard_errors, dtype=float)

    def value_at(self, energy: float) -> float:
        """Right-continuous step value at an arbitrary energy."""
        idx = np.searchsorted(self.energy_grid, energy, side="right") - 1
        if idx < 0:
            return 0.0
        return float(self.values[idx])


def default_energy_grid(eigenvalues: np.ndarray, points: int = 512) -> np.ndarray:
    lo, hi = float(np.min(eigenvalues)), float(np.max(eigenvalues))
    return np.linspace(lo - 0.1, hi + 0.1, points)


def ids_from_eigenvalues(eigenvalues: np.ndarray, volume: int, grid: np.ndarray) -> np.ndarray:
    ev = np.sort(np.asarray(eigenvalues))
    return np.searchsorted(ev, grid, side="right") / volume


def sliced_spectrum(
    mat, lo: float, hi: float, slice_cap: int = WINDOW_EIGS_CAP
) -> np.ndarray:
    """All eigenvalues in [lo, hi] by recursive window bisection.

    The spectrum-slicing fallback for volumes beyond the dense capacity:
    each slice is solved by the certified windowed iteration and split in
    two whenever it holds more than ``slice_cap`` eigenvalues.
    """
    try:
        return solve(mat, "window", window=(lo, hi), window_cap=slice_cap).eigenvalues
    except CapacityError:
        # adjacent slices meet at consecutive floats, so no value is counted twice
        mid = 0.5 * (lo + hi)
        left = sliced_spectrum(mat, lo, mid, slice_cap)
        right = sliced_spectrum(mat, np.nextafter(mid, hi), hi, slice_cap)
        merged = np.concatenate([left, right])
        merged.sort()
        return merged


def ids(op_or_eigenvalues, energy_grid: np.ndarray, volume: int | None = None,
        dense_cap: int = DENSE_CAP) -> IDSCurve:
    """Counting IDS N(E) = |Λ|⁻¹ #{eigenvalues ≤ E} of a single operator.

    Exact counting from a full solve below ``dense_cap`` sites; windowed
    spectrum slicing over the grid range above it (values below the grid
    are counted through an extremal anchor so N stays absolute).
    """
    grid = np.asarray(energy_grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise PreconditionError("energy grid must be strictly ascending")
    if isinstance(op_or_eigenvalues, MagneticOperator) or sp.issparse(op_or_eigenvalues):
        mat = _as_sparse(op_or_eigenvalues)
        volume = mat.shape[0]
        if volume <= dense_cap:
            evals = solve(mat, "full").eigenvalues
        else:
            bottom = solve(mat, "extremal", k=1, which="smallest").eigenvalues[0]
            lo = min(float(bottom) - 1.0, float(grid[0]))
            evals = sliced_spectrum(mat, lo, float(grid[-1]))
    else:
        evals = np.asarray(op_or_eigenvalues, dtype=float)
        if volume is None:
            volume = evals.size
    vals = ids_from_eigenvalues(evals, volume, grid)
    return IDSCurve(grid, vals, volume, 1, np.zeros_like(grid))


def ensemble_ids(curves: list[np.ndarray], volume: int, grid: np.ndarray) -> IDSCurve:
    """Mean IDS over per-realization value arrays, with standard errors."""
    stack = np.stack(curves)
    mean = stack.mean(axis=0)
    n = stack.shape[0]
    stderr = stack.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    return IDSCurve(grid, mean, volume, n, stderr)


# ---------------------------------------------------------------------------
# ensembles

@dataclass
class EnsembleResult:
    values: list                      # index-ordered successful results
    indices: list                     # realization indices that succeeded
    failures: list                    # (index, error message)

    @property
    def n_failed(self) -> int:
        return len(self.failures)


def run_ensemble(
    worker,
    ensemble_size: int,
    workers: int = 1,
    on_error: str = "record",
) -> EnsembleResult:
    """Run ``worker(index)`` for indices 0..n-1 with order-independent collection.

    Failures are recorded and the ensemble continues (``on_error="record"``),
    or re-raised (``on_error="raise"``).  Results are returned in index order
    whatever the execution order, so any commutative reduction downstream is
    reproducible.
    """
    if ensemble_size < 1:
        raise PreconditionError("ensemble size must be >= 1")
    results: dict[int, object] = {}
    failures: list[tuple[int, str]] = []

    def run_one(i):
        try:
            results[i] = worker(i)
        except Exception as exc:  # noqa: BLE001 - tagged and carried
            if on_error == "raise":
                raise
            failures.append((i, repr(exc)))

    if workers <= 1:
        for i in range(ensemble_size):
            run_one(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for fut in [pool.submit(run_one, i) for i in range(ensemble_size)]:
                fut.result()
    indices = sorted(results)
    failures.sort()
    return EnsembleResult(
        values=[results[i] for i in indices], indices=indices, failures=failures
    )


# ---------------------------------------------------------------------------
# gap-edge tracking

@dataclass
class GapTrack:
    lambdas: np.ndarray
    lower_edges: np.ndarray
    upper_edges: np.ndarray
    fit_nu: float                    # least-squares slope of the upper drift
    nu_bound: float                  # minimal ν with drift ≤ ν λ on the samples
    closed_at: float | None = None   # λ where the tracked gap closed, if any


def track_gap_edges(
    model,
    lambdas,
    base_gap,
    ensemble_size: int = 8,
    master_seed: int = 7,
    dense_cap: int = DENSE_CAP,
) -> GapTrack:
    """Track E±(λ) by the extreme-over-configurations estimator.

    For each λ the configurations are the deterministic extreme draws (all
    couplings at a support endpoint, plus the ω ≡ 0 reference whose spectrum
    is exactly the periodic one) and ``ensemble_size`` random realizations;
    E+(λ) is the smallest eigenvalue above the gap center over the
    configurations, E-(λ) the largest below.  The random draws reuse the
    same seeds across λ (common random numbers).
    """
    lambdas = np.asarray(sorted(lambdas), dtype=float)
    if lambdas[0] < 0:
        raise PreconditionError("lambda grid must start at >= 0")
    center = base_gap.midpoint
    lo_sup, hi_sup = model.disorder.support
    lower, upper = [], []
    closed_at = None
    for lam in lambdas:
        e_up, e_dn = np.inf, -np.inf
        realizations = [
            constant_realization(model.geometry, lo_sup),
            constant_realization(model.geometry, hi_sup),
            constant_realization(model.geometry, 0.0),
        ] + [
            sample_disorder(model.disorder, model.geometry, master_seed, i)
            for i in range(ensemble_size)
        ]
        for realization in realizations:
            op = model.operator(lam, realization=realization)
            above = spectrum_near(op, center, "above")
            below = spectrum_near(op, center, "below")
            if above is not None:
                e_up = min(e_up, above)
            if below is not None:
                e_dn = max(e_dn, below)
        if not np.isfinite(e_up) or not np.isfinite(e_dn) or e_up <= e_dn:
            closed_at = float(lam)
            break
        upper.append(e_up)
        lower.append(e_dn)
    n_ok = len(upper)
    lams = lambdas[:n_ok]
    upper = np.array(upper)
    lower = np.array(lower)
    drift = base_gap.upper_edge - upper
    pos = lams > 0
    if np.any(pos):
        fit_nu = float(np.sum(drift[pos] * lams[pos]) / np.sum(lams[pos] ** 2))
        nu_bound = float(np.max(np.maximum(drift[pos], 0.0) / lams[pos]))
    else:
        fit_nu = 0.0
        nu_bound = 0.0
    return GapTrack(
        lambdas=lams, lower_edges=lower, upper_edges=upper,
        fit_nu=fit_nu, nu_bound=nu_bound, closed_at=closed_at,
    )
