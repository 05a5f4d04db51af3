import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from magspec.disorder import sample_disorder, uniform_disorder
from magspec.errors import DataError, ModelError, ShapeError
from magspec.fields import PeriodicBackground, masked_profile
from magspec.geometry import LatticeGeometry
from magspec.operators import (
    all_plaquette_fluxes,
    apply_gauge,
    assemble_continuum,
    assemble_lattice,
    assemble_split,
    open_chain_1d,
    plaquette_flux,
    _wrap_angle,
)


def fourier_free_2d(L):
    k1, k2 = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
    return np.sort((4 - 2 * np.cos(2 * np.pi * k1 / L) - 2 * np.cos(2 * np.pi * k2 / L)).ravel())


def test_free_edge_laplacian_spectrum():
    L = 32
    g = LatticeGeometry(2, (L, L))
    op = assemble_lattice("edge_laplacian", g, np.zeros((2, L, L)))
    vals = np.linalg.eigvalsh(op.dense())
    exact = fourier_free_2d(L)
    assert np.max(np.abs(vals - exact)) < 1e-10
    assert abs(vals[0]) < 1e-10 and abs(vals[-1] - 8.0) < 1e-10


def test_free_hopping_range():
    g = LatticeGeometry(2, (16, 16))
    op = assemble_lattice("hopping", g, np.zeros((2, 16, 16)))
    vals = np.linalg.eigvalsh(op.dense())
    assert vals[0] >= -4.0 - 1e-12 and vals[-1] <= 4.0 + 1e-12


def test_ring_total_flux():
    g = LatticeGeometry(1, (4,))
    alpha = np.full((1, 4), 0.37)
    op = assemble_lattice("hopping", g, alpha)
    vals = np.sort(np.linalg.eigvalsh(op.dense()))
    exact = np.sort(2 * np.cos(2 * np.pi * np.arange(4) / 4 + 0.37))
    assert np.max(np.abs(vals - exact)) < 1e-10


def test_edge_antisymmetry_validation():
    g = LatticeGeometry(2, (4, 4))
    alpha = np.random.default_rng(0).normal(size=(2, 4, 4))
    doubled = np.concatenate([alpha, -np.roll(alpha[0:1], 1, axis=1), -np.roll(alpha[1:2], 1, axis=2)])
    op = assemble_lattice("hopping", g, doubled)
    assert op.edge_potential.shape == (2, 4, 4)
    bad = doubled.copy()
    bad[2, 1, 1] += 1e-6
    with pytest.raises(DataError):
        assemble_lattice("hopping", g, bad)
    with pytest.raises(ShapeError):
        assemble_lattice("hopping", g, np.zeros((3, 4, 4)))


def test_hermiticity_and_reality():
    rng = np.random.default_rng(1)
    g = LatticeGeometry(2, (6, 6))
    alpha = rng.normal(size=(2, 6, 6))
    op = assemble_lattice("edge_laplacian", g, alpha)
    assert op.hermiticity_defect() <= 1e-13
    free = assemble_lattice("edge_laplacian", g, np.zeros((2, 6, 6)))
    assert np.max(np.abs(free.dense().imag)) == 0.0


@given(
    chi=arrays(np.float64, (6, 6), elements=st.floats(-np.pi, np.pi, allow_nan=False)),
)
@settings(max_examples=15, deadline=None)
def test_gauge_covariance_property(chi):
    rng = np.random.default_rng(7)
    g = LatticeGeometry(2, (6, 6))
    alpha = rng.normal(size=(2, 6, 6))
    op = assemble_lattice("edge_laplacian", g, alpha)
    gop = apply_gauge(op, chi)
    v1 = np.linalg.eigvalsh(op.dense())
    v2 = np.linalg.eigvalsh(gop.dense())
    assert np.max(np.abs(v1 - v2)) < 1e-10
    f1 = all_plaquette_fluxes(op, (0, 1))
    f2 = all_plaquette_fluxes(gop, (0, 1))
    assert np.max(np.abs(_wrap_angle(f1 - f2))) < 1e-12


def test_gauge_identity_and_link_rule():
    g = LatticeGeometry(2, (4, 4))
    op = assemble_lattice("hopping", g, np.ones((2, 4, 4)) * 0.2)
    same = apply_gauge(op, np.zeros((4, 4)))
    assert np.max(np.abs((same.matrix - op.matrix).toarray())) == 0.0
    chi = np.arange(16.0).reshape(4, 4)
    gop = apply_gauge(op, chi)
    expected = op.edge_potential[0] + np.roll(chi, -1, axis=0) - chi
    assert np.allclose(gop.edge_potential[0], expected)


def test_landau_gauge_flux():
    L, B = 8, 2 * np.pi * 3 / 8
    g = LatticeGeometry(2, (L, L))
    alpha = np.zeros((2, L, L))
    alpha[1] = B * np.arange(L)[:, None]
    op = assemble_lattice("edge_laplacian", g, alpha)
    fluxes = all_plaquette_fluxes(op, (0, 1))
    assert np.max(np.abs(_wrap_angle(fluxes - B))) < 1e-12
    assert plaquette_flux(op, ((2, 3), (0, 1))) == pytest.approx(_wrap_angle(B), abs=1e-12)


def test_flux_brute_force_oracle():
    rng = np.random.default_rng(5)
    g = LatticeGeometry(2, (6, 6))
    alpha = rng.uniform(-np.pi, np.pi, size=(2, 6, 6))
    op = assemble_lattice("hopping", g, alpha)
    x = (2, 4)
    brute = (
        alpha[0][2, 4]
        + alpha[1][(2 + 1) % 6, 4]
        - alpha[0][2, (4 + 1) % 6]
        - alpha[1][2, 4]
    )
    assert plaquette_flux(op, (x, (0, 1))) == pytest.approx(_wrap_angle(brute), abs=1e-12)
    with pytest.raises(ModelError):
        plaquette_flux(assemble_lattice("hopping", LatticeGeometry(1, (6,)), np.zeros((1, 6))), ((0,), (0, 1)))


def test_flux_zero_for_zero_field():
    g = LatticeGeometry(2, (4, 4))
    op = assemble_lattice("edge_laplacian", g, np.zeros((2, 4, 4)))
    assert np.max(np.abs(all_plaquette_fluxes(op, (0, 1)))) == 0.0


# ---------------------------------------------------------------------------
# continuum assembly

def _disordered_setup(h=0.5, L=16, lam=0.1, eps=0.3, seed=42):
    g = LatticeGeometry(2, (L, L), spacing=h, cell=(4, 4))
    xs = np.arange(4) * h
    x1, x2 = np.meshgrid(xs, xs, indexing="ij")
    v = 2 * (1 - np.cos(np.pi * x1)) / 2 + 3 * (1 - np.cos(np.pi * x2)) / 2
    a0 = np.stack([np.sin(np.pi * x1), np.cos(np.pi * x2)])
    bg = PeriodicBackground(g, v, a0, eps)
    u = np.stack([np.sin(np.pi * x1) * np.sin(np.pi * x2), 0.5 * np.sin(np.pi * x2)])
    prof = masked_profile(g, u, margin=1)
    model = uniform_disorder(lam=lam)
    real = sample_disorder(model, g, master_seed=seed, index=0)
    return g, bg, prof, model, real


def test_free_continuum_matches_scaled_lattice():
    g = LatticeGeometry(2, (8, 8), spacing=0.5, cell=(2, 2))
    bg = PeriodicBackground(g, np.zeros((2, 2)))
    opc = assemble_continuum(g, bg)
    opl = assemble_lattice("edge_laplacian", LatticeGeometry(2, (8, 8)), np.zeros((2, 8, 8)))
    assert np.abs((opc.matrix - 4.0 * opl.matrix)).max() == 0.0


def test_constant_potential_shift():
    g = LatticeGeometry(2, (8, 8), spacing=0.5, cell=(2, 2))
    bg0 = PeriodicBackground(g, np.zeros((2, 2)))
    bgc = PeriodicBackground(g, np.full((2, 2), 1.7))
    v0 = np.linalg.eigvalsh(assemble_continuum(g, bg0).dense())
    vc = np.linalg.eigvalsh(assemble_continuum(g, bgc).dense())
    assert np.max(np.abs(vc - v0 - 1.7)) < 1e-12


def test_split_consistency_matching_discretization():
    g, bg, prof, model, real = _disordered_setup()
    h0, h1, h2 = assemble_split(g, bg, prof, model, real)
    lam = model.lam
    combo = h0.matrix + lam * h1.matrix + lam**2 * h2.matrix
    expanded = assemble_continuum(g, bg, prof, model, real, phases="expanded")
    assert np.abs((combo - expanded.matrix)).max() < 1e-10
    for part in (h0, h1, h2):
        assert part.hermiticity_defect() <= 1e-13


def test_peierls_close_to_expanded_but_distinct():
    g, bg, prof, model, real = _disordered_setup()
    peierls = assemble_continuum(g, bg, prof, model, real)
    expanded = assemble_continuum(g, bg, prof, model, real, phases="expanded")
    diff = np.abs((peierls.matrix - expanded.matrix)).max()
    assert 1e-8 < diff < 1e-1   # same physics, different discretization of cross terms


def test_one_dimensional_open_chain_triviality():
    rng = np.random.default_rng(11)
    alpha = rng.uniform(-np.pi, np.pi, size=19)
    free = np.linalg.eigvalsh(open_chain_1d(20, np.zeros(19)))
    rand = np.linalg.eigvalsh(open_chain_1d(20, alpha))
    assert np.max(np.abs(free - rand)) < 1e-10


def test_ring_depends_on_total_flux_only():
    g = LatticeGeometry(1, (8,))
    rng = np.random.default_rng(2)
    alpha = rng.normal(size=(1, 8))
    total = alpha.sum()
    uniform = np.full((1, 8), total / 8)
    v1 = np.linalg.eigvalsh(assemble_lattice("hopping", g, alpha).dense())
    v2 = np.linalg.eigvalsh(assemble_lattice("hopping", g, uniform).dense())
    assert np.max(np.abs(np.sort(v1) - np.sort(v2))) < 1e-10


def test_profile_cell_mismatch_is_model_error():
    g, bg, prof, model, real = _disordered_setup()
    g2 = LatticeGeometry(2, (16, 16), spacing=0.5, cell=(8, 8))
    from magspec.fields import SingleSiteProfile

    big = SingleSiteProfile(g2, np.zeros((2, 8, 8)))
    with pytest.raises((ModelError, ShapeError)):
        assemble_continuum(g, bg, big, model, real)


def test_nonfinite_field_rejected():
    g = LatticeGeometry(2, (4, 4), cell=(2, 2))
    v = np.zeros((2, 2))
    v[0, 0] = np.nan
    with pytest.raises(DataError):
        PeriodicBackground(g, v)
