import numpy as np
import pytest

from magspec.disorder import sample_disorder, uniform_disorder
from magspec.errors import CapacityError, PreconditionError
from magspec.fields import PeriodicBackground
from magspec.geometry import LatticeGeometry
from magspec.models import lattice_random_model
from magspec.operators import assemble_continuum, assemble_lattice
from magspec.spectral import (
    EnsembleResult,
    ids,
    ids_from_eigenvalues,
    nearest_eigenvalue,
    run_ensemble,
    solve,
    spectrum_near,
    track_gap_edges,
)


def _fourier_2d(L):
    k1, k2 = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
    return np.sort((4 - 2 * np.cos(2 * np.pi * k1 / L) - 2 * np.cos(2 * np.pi * k2 / L)).ravel())


@pytest.fixture(scope="module")
def free16():
    g = LatticeGeometry(2, (16, 16))
    return assemble_lattice("edge_laplacian", g, np.zeros((2, 16, 16)))


def test_full_solve_matches_fourier(free16):
    result = solve(free16, "full")
    assert np.max(np.abs(result.eigenvalues - _fourier_2d(16))) < 1e-10


def test_full_capacity_error(free16):
    with pytest.raises(CapacityError):
        solve(free16, "full", dense_cap=100)


def test_window_inside_gap_empty(lattice_model16):
    model = lattice_model16
    op = model.operator(0.0, index=0, master_seed=1)
    gap = model.gap
    res = solve(op, "window", window=(gap.midpoint - 0.2, gap.midpoint + 0.2))
    assert res.eigenvalues.size == 0


def test_window_vs_dense_oracle():
    # 400-site disordered instance: iterative window against the dense solve
    model = lattice_random_model(L=20, va=8.0, vb=12.0, eps=3.0, u_scale=3.0)
    op = model.operator(0.3, index=0, master_seed=5)
    assert op.n == 400
    dense = solve(op, "full").eigenvalues
    lo, hi = 18.0, 21.0
    win = solve(op, "window", window=(lo, hi))
    expected = dense[(dense >= lo) & (dense <= hi)]
    assert win.eigenvalues.size == expected.size
    assert np.max(np.abs(win.eigenvalues - expected)) < 1e-9
    assert win.residuals is not None and np.all(win.residuals < 1e-8)


def test_extremal_solve(free16):
    smallest = solve(free16, "extremal", k=4, which="smallest")
    largest = solve(free16, "extremal", k=4, which="largest")
    exact = _fourier_2d(16)
    assert np.max(np.abs(smallest.eigenvalues - exact[:4])) < 1e-9
    assert np.max(np.abs(largest.eigenvalues - exact[-4:])) < 1e-9


def test_spectrum_near_and_nearest(lattice_model16):
    model = lattice_model16
    op = model.operator(0.1, index=2, master_seed=3)
    dense = solve(op, "full").eigenvalues
    center = model.gap.midpoint
    above = spectrum_near(op, center, "above")
    below = spectrum_near(op, center, "below")
    assert above == pytest.approx(dense[dense > center][0], abs=1e-9)
    assert below == pytest.approx(dense[dense < center][-1], abs=1e-9)
    near = nearest_eigenvalue(op, center)
    assert near == pytest.approx(dense[np.argmin(np.abs(dense - center))], abs=1e-9)


# ---------------------------------------------------------------------------
# IDS

def test_ids_bounds_and_monotone(free16):
    grid = np.linspace(-0.5, 8.5, 200)
    curve = ids(free16, grid)
    assert curve.values[0] == 0.0
    assert curve.values[-1] == 1.0
    assert np.all(np.diff(curve.values) >= 0)
    assert np.all((curve.values >= 0) & (curve.values <= 1))


def test_ids_fourier_count(free16):
    grid = np.array([3.9999, 4.0001])
    curve = ids(free16, grid)
    exact = _fourier_2d(16)
    assert curve.values[1] == pytest.approx(np.sum(exact <= 4.0001) / 256)


def test_ids_requires_ascending(free16):
    with pytest.raises(PreconditionError):
        ids(free16, np.array([1.0, 0.5, 2.0]))


def test_ids_spectrum_slicing_matches_dense():
    # force the beyond-dense-threshold path on a small instance
    model = lattice_random_model(L=20, va=8.0, vb=12.0, eps=3.0, u_scale=3.0)
    op = model.operator(0.3, index=0, master_seed=5)
    grid = np.linspace(2.0, 30.0, 97)
    dense_curve = ids(op, grid)
    sliced_curve = ids(op, grid, dense_cap=64)
    assert np.max(np.abs(dense_curve.values - sliced_curve.values)) == 0.0


def test_lambda_zero_ensemble_equals_deterministic(lattice_model16):
    model = lattice_model16
    grid = np.linspace(3.0, 26.0, 100)
    vol = model.geometry.n_sites

    def worker(i):
        op = model.operator(0.0, index=i, master_seed=9)
        return ids_from_eigenvalues(solve(op, "full").eigenvalues, vol, grid)

    res = run_ensemble(worker, 3)
    assert np.all(res.values[0] == res.values[1])
    assert np.all(res.values[1] == res.values[2])


# ---------------------------------------------------------------------------
# ensembles

def test_ensemble_determinism():
    g = LatticeGeometry(2, (10, 10), cell=(2, 2))

    def stat(i):
        om = sample_disorder(uniform_disorder(), g, master_seed=5, index=i).omegas
        return float(om.mean())

    a = run_ensemble(stat, 16)
    b = run_ensemble(stat, 16)
    assert a.values == b.values
    c = run_ensemble(stat, 16, workers=2)
    assert a.values == c.values


def test_ensemble_single_equals_direct():
    def stat(i):
        return i * 2 + 1

    res = run_ensemble(stat, 1)
    assert res.values == [1]


def test_ensemble_failures_recorded():
    def flaky(i):
        if i == 3:
            raise ValueError("boom")
        return i

    res = run_ensemble(flaky, 6)
    assert res.n_failed == 1
    assert res.failures[0][0] == 3
    assert res.values == [0, 1, 2, 4, 5]
    with pytest.raises(ValueError):
        run_ensemble(flaky, 6, on_error="raise")
    with pytest.raises(PreconditionError):
        run_ensemble(flaky, 0)


def test_omega_mean_clt():
    g = LatticeGeometry(2, (10, 10), cell=(2, 2))

    def stat(i):
        return float(sample_disorder(uniform_disorder(), g, 77, i).omegas.mean())

    res = run_ensemble(stat, 1000)
    means = np.array(res.values)
    stderr = 1.0 / np.sqrt(3 * 25 * 1000)
    assert abs(means.mean()) <= 3 * stderr


def test_stderr_scaling():
    g = LatticeGeometry(1, (32,), cell=(1,))

    def stat(i):
        return float(sample_disorder(uniform_disorder(), g, 17, i).omegas.mean())

    small = np.array(run_ensemble(stat, 100).values)
    large = np.array(run_ensemble(stat, 1000).values)
    se_small = small.std(ddof=1) / np.sqrt(small.size)
    se_large = large.std(ddof=1) / np.sqrt(large.size)
    ratio = se_small / se_large
    assert np.sqrt(10) / 2 < ratio < np.sqrt(10) * 2


# ---------------------------------------------------------------------------
# gap-edge tracking

def test_track_gap_edges_lambda_zero_exact(lattice_model16):
    model = lattice_model16
    track = track_gap_edges(model, [0.0], model.gap, ensemble_size=2, master_seed=3)
    assert track.upper_edges[0] == pytest.approx(model.gap.upper_edge, abs=1e-8)
    assert track.lower_edges[0] == pytest.approx(model.gap.lower_edge, abs=1e-8)


def test_track_gap_edges_drift(lattice_model16):
    model = lattice_model16
    lams = [0.0, 0.05, 0.1]
    track = track_gap_edges(model, lams, model.gap, ensemble_size=4, master_seed=3)
    assert track.closed_at is None
    drift = model.gap.upper_edge - track.upper_edges
    assert np.all(drift >= -1e-10)
    assert np.all(np.diff(drift) >= -1e-9)   # nonincreasing edges along λ
    assert np.isfinite(track.nu_bound)
    assert np.all(drift[1:] <= track.nu_bound * track.lambdas[1:] + 1e-12)
