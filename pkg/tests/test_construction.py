import numpy as np
import pytest

from magspec.bloch import EdgeState, band_structure, bloch_reduce, detect_gap, edge_states
from magspec.errors import ModelError, PreconditionError, ShapeError
from magspec.fields import PeriodicBackground, boundary_margin_mask, masked_profile
from magspec.geometry import LatticeGeometry
from magspec.construction import (
    ConditionMatrix,
    PerpField,
    annihilation_check,
    cell_diff,
    cell_divergence,
    default_perp,
    epsilon_taylor_residuals,
    first_order_correction,
    condition_matrix,
    condition_oracle,
    l2cell_norm,
    normalized_edge_state,
    perp_apply,
    perp_construct,
    reality_check,
)
from magspec.models import construction_certificate, continuum_cosine


# ---------------------------------------------------------------------------
# reality diagnostics

def test_reality_real_vector():
    rep = reality_check(np.array([0.3, -1.2, 0.7, 0.1]))
    assert rep["collinear"]
    assert rep["phase"] == pytest.approx(0.0, abs=1e-12)
    assert rep["residual"] == pytest.approx(0.0, abs=1e-14)


def test_reality_recovers_global_phase():
    rng = np.random.default_rng(0)
    f = rng.normal(size=32)
    psi = np.exp(1j * 0.9) * f
    rep = reality_check(psi)
    assert rep["collinear"]
    assert np.exp(1j * (rep["phase"] - 0.9)).real == pytest.approx(1.0, abs=1e-10) or \
        np.exp(1j * (rep["phase"] - 0.9)).real == pytest.approx(-1.0, abs=1e-10)


def test_reality_plane_wave_not_collinear():
    x = np.arange(5)
    psi = np.exp(1j * 2 * np.pi * x / 5)
    rep = reality_check(psi)
    assert not rep["collinear"]
    assert rep["residual"] > 0.1


def test_reality_half_lattice_flag(staggered2d):
    g, bg = staggered2d
    bands = band_structure(bg, g, 16)
    gap = detect_gap(bands, (3.0, 6.0))
    st = edge_states(bands, gap)[0]
    rep = reality_check(st.vector, st.theta, g)
    assert rep["collinear"]
    assert rep["theta_in_half_dual_lattice"]
    generic = reality_check(st.vector, np.array([0.3, 0.1]), g)
    assert not generic["theta_in_half_dual_lattice"]


def test_reality_zero_vector_guarded():
    with pytest.raises(PreconditionError):
        reality_check(np.zeros(8))


# ---------------------------------------------------------------------------
# perp construction

def test_perp_field_validation():
    with pytest.raises(ModelError):
        PerpField(np.zeros((2, 2)))
    with pytest.raises(ModelError):
        PerpField(np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(ModelError):
        default_perp(1)
    p = default_perp(2)
    assert np.all(p.skew_matrix == np.array([[0.0, -1.0], [1.0, 0.0]]))


def test_perp_constant_state_degenerate():
    g = LatticeGeometry(2, (8, 8), cell=(4, 4))
    psi = np.full(16, 0.25)
    st = EdgeState(theta=np.zeros(2), energy=0.0, vector=psi, band_index=0)
    with pytest.raises(ModelError):
        perp_construct(st, g)


def test_perp_requires_half_lattice():
    g = LatticeGeometry(2, (8, 8), cell=(4, 4))
    rng = np.random.default_rng(1)
    psi = rng.normal(size=16)
    st = EdgeState(theta=np.array([0.2, 0.0]), energy=0.0, vector=psi, band_index=0)
    with pytest.raises(ModelError):
        perp_construct(st, g)


def test_perp_divergence_exact_zero():
    g = LatticeGeometry(2, (8, 8), cell=(8, 8), spacing=0.25)
    rng = np.random.default_rng(2)
    psi = rng.normal(size=64)
    st = EdgeState(theta=np.zeros(2), energy=0.0, vector=psi, band_index=0)
    a0 = perp_construct(st, g)
    assert np.max(np.abs(cell_divergence(a0, g))) < 1e-13


def test_eq10_identity_pointwise_zero():
    # grad(f) . perp-grad(f) vanishes identically at the discrete level
    g = LatticeGeometry(2, (8, 8), cell=(8, 8), spacing=0.5)
    rng = np.random.default_rng(3)
    f = rng.normal(size=(8, 8))
    perp = default_perp(2)
    grads = [np.real(cell_diff(f, g, np.zeros(2), a)) for a in range(2)]
    pg = perp_apply(perp, f, g, np.zeros(2))
    dot = grads[0] * np.real(pg[0]) + grads[1] * np.real(pg[1])
    assert np.max(np.abs(dot)) < 1e-13


# ---------------------------------------------------------------------------
# annihilation

def test_annihilation_orders_and_negative_control():
    cert = construction_certificate(
        lambda m: continuum_cosine(m=m), [4, 8, 16], eps=0.25, u_scale=1.0
    )
    rows = cert["rows"]
    residuals = [r["annihilation_residual"] for r in rows]
    assert residuals[0] > residuals[1] > residuals[2]
    for order in cert["annihilation_orders"]:
        assert 1.5 < order < 2.5
    # negative control: a random (non-constructed) field has an O(1) residual
    g, bg = continuum_cosine(m=8)
    bands = band_structure(bg, g, 8, store_edge_vectors=False)
    gap = detect_gap(bands, (float(np.min(bands.bands)), float(np.max(bands.bands[4]))))
    st = normalized_edge_state(edge_states(bands, gap)[0], g)
    rng = np.random.default_rng(4)
    a_rand = rng.normal(size=(2,) + g.cell)
    assert annihilation_check(a_rand, st, g) > 0.1 * residuals[1]
    assert annihilation_check(a_rand, st, g) > 10 * residuals[1]


def test_annihilation_guards():
    g = LatticeGeometry(2, (8, 8), cell=(4, 4))
    st = EdgeState(theta=np.zeros(2), energy=0.0, vector=np.zeros(16), band_index=0)
    with pytest.raises(PreconditionError):
        annihilation_check(np.zeros((2, 4, 4)), st, g)
    st2 = EdgeState(theta=np.zeros(2), energy=0.0, vector=np.ones(16), band_index=0)
    with pytest.raises(ShapeError):
        annihilation_check(np.zeros((2, 3, 3)), st2, g)


# ---------------------------------------------------------------------------
# condition matrix

def _lattice_edge_setup(eps=0.3):
    from magspec.models import lattice_random_model

    model = lattice_random_model(L=16, va=8.0, vb=12.0, eps=eps, u_scale=1.0)
    g = model.geometry
    bands = band_structure(model.background, g, 8, store_edge_vectors=False)
    gap = detect_gap(bands, (model.gap.lower_edge - 1, model.gap.upper_edge + 1))
    states = [normalized_edge_state(s, g) for s in edge_states(bands, gap)]
    return model, g, states


def test_gh_zero_profile_exact_zero(lattice_model16):
    model = lattice_model16
    g = model.geometry
    from magspec.fields import SingleSiteProfile

    zero = SingleSiteProfile(g, np.zeros((2,) + g.cell))
    bands = band_structure(model.background, g, 8, store_edge_vectors=False)
    gap = detect_gap(bands, (model.gap.lower_edge - 1, model.gap.upper_edge + 1))
    states = [normalized_edge_state(s, g) for s in edge_states(bands, gap)]
    m = condition_matrix(states, model.background, g, zero)
    assert np.all(m.entries == 0.0)
    assert m.definiteness == "singular"


def test_gh_eps_zero_singular():
    # real edge eigenfunction, no background field: the current term integrates
    # to zero by parts, so the 1x1 matrix vanishes to rounding
    from magspec.models import lattice_random_model

    model = lattice_random_model(L=16, va=8.0, vb=12.0, eps=0.3, u_scale=1.0)
    g = model.geometry
    bg0 = PeriodicBackground(g, model.background.potential, model.background.vector_potential, 0.0)
    bands = band_structure(bg0, g, 8, store_edge_vectors=False)
    gap = detect_gap(bands, (model.gap.lower_edge - 1, model.gap.upper_edge + 1))
    states = [normalized_edge_state(s, g) for s in edge_states(bands, gap)]
    m = condition_matrix(states, bg0, g, model.profile)
    assert abs(m.entries[0, 0]) < 1e-12
    assert m.definiteness == "singular"


def test_gh_definite_matches_oracle(lattice_model16):
    model = lattice_model16
    g = model.geometry
    bands = band_structure(model.background, g, 8, store_edge_vectors=False)
    gap = detect_gap(bands, (model.gap.lower_edge - 1, model.gap.upper_edge + 1))
    states = [normalized_edge_state(s, g) for s in edge_states(bands, gap)]
    m = condition_matrix(states, model.background, g, model.profile)
    assert m.definiteness in ("positive", "negative")
    assert m.margin > 1e-6 * m.norm
    oracle = condition_oracle(states[0], model.background, g, model.profile)
    assert m.entries[0, 0].real == pytest.approx(oracle, rel=1e-8)
    assert abs(m.entries[0, 0].imag) < 1e-12 * max(1.0, abs(oracle))


def test_gh_phase_invariance(lattice_model16):
    model = lattice_model16
    g = model.geometry
    bands = band_structure(model.background, g, 8, store_edge_vectors=False)
    gap = detect_gap(bands, (model.gap.lower_edge - 1, model.gap.upper_edge + 1))
    states = [normalized_edge_state(s, g) for s in edge_states(bands, gap)]
    m1 = condition_matrix(states, model.background, g, model.profile)
    rotated = [
        EdgeState(theta=s.theta, energy=s.energy, vector=s.vector * np.exp(1j * 1.23),
                  band_index=s.band_index)
        for s in states
    ]
    m2 = condition_matrix(rotated, model.background, g, model.profile)
    e1 = np.abs(np.linalg.eigvalsh(0.5 * (m1.entries + m1.entries.conj().T)))
    e2 = np.abs(np.linalg.eigvalsh(0.5 * (m2.entries + m2.entries.conj().T)))
    assert np.max(np.abs(e1 - e2)) < 1e-10
    assert m1.definiteness == m2.definiteness


def test_gh_requires_normalization(lattice_model16):
    # at h < 1 the ℓ²-normalized eigenvector is not L²(cell)-normalized
    g, bg = continuum_cosine(m=4)
    bands = band_structure(bg, g, 8, store_edge_vectors=False)
    gap = detect_gap(bands, (float(np.min(bands.bands)), float(np.max(bands.bands[4]))))
    raw = edge_states(bands, gap)
    profile = masked_profile(g, np.ones((2,) + g.cell), margin=1)
    with pytest.raises(PreconditionError):
        condition_matrix(raw, bg, g, profile)
    with pytest.raises(PreconditionError):
        condition_matrix([], bg, g, profile)


# ---------------------------------------------------------------------------
# first-order correction

def _edge_state_and_geometry(m=6):
    g, bg = continuum_cosine(m=m)
    bands = band_structure(bg, g, 8, store_edge_vectors=False)
    gap = detect_gap(bands, (float(np.min(bands.bands)), float(np.max(bands.bands[4]))))
    st = normalized_edge_state(edge_states(bands, gap)[0], g)
    return g, bg, st


def test_correction_defining_equations():
    g, bg, st = _edge_state_and_geometry()
    rng = np.random.default_rng(5)
    a_dir = rng.normal(size=(2,) + g.cell)
    bg_dir = PeriodicBackground(g, bg.potential, a_dir, 0.0)
    psi1, diag = first_order_correction(bg_dir, g, st)
    assert diag["solve_residual"] < 1e-10
    assert diag["projection_residual"] < 1e-12


def test_correction_linear_in_direction():
    g, bg, st = _edge_state_and_geometry()
    rng = np.random.default_rng(6)
    a_dir = rng.normal(size=(2,) + g.cell)
    psi1, _ = first_order_correction(PeriodicBackground(g, bg.potential, a_dir, 0.0), g, st)
    psi1_scaled, _ = first_order_correction(
        PeriodicBackground(g, bg.potential, 2.5 * a_dir, 0.0), g, st
    )
    assert np.max(np.abs(psi1_scaled - 2.5 * psi1)) < 1e-10


def test_constructed_direction_gives_vanishing_correction():
    cert = construction_certificate(
        lambda m: continuum_cosine(m=m), [4, 8, 16], eps=0.25, u_scale=1.0
    )
    for order in cert["psi1_orders"]:
        assert order > 1.8
    assert cert["rows"][-1]["psi1_l2"] < cert["rows"][0]["psi1_l2"] / 8


def test_epsilon_taylor_second_order():
    g, bg, st = _edge_state_and_geometry()
    rng = np.random.default_rng(7)
    a_dir = rng.normal(size=(2,) + g.cell)
    bg_dir = PeriodicBackground(g, bg.potential, a_dir, 0.0)
    psi1, _ = first_order_correction(bg_dir, g, st)
    eps = np.array([0.02, 0.04, 0.08])
    res = epsilon_taylor_residuals(bg_dir, g, st, psi1, eps)
    slope = np.polyfit(np.log(eps), np.log(res), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.1)
