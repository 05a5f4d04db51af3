"""Acceptance suite: one test per criterion, each printing a PASS line with
its measured numbers.  Run with ``pytest tests/test_acceptance.py -v -s``.

The statistical criteria use the frozen calibrated models; the heavy
ensembles (Wegner, concentration, Lifshitz) dominate the runtime.
"""

import numpy as np
import pytest

from magspec.analysis import (
    commutator_with_cutoff,
    decay_rate,
    fh_derivative,
    window_concentration,
    lifshitz_fit,
    resolvent_decay,
    smooth_cutoff,
    synthetic_lifshitz_curve,
)
from magspec.bloch import band_structure, bloch_reduce, commensurate_thetas, detect_gap, edge_states
from magspec.disorder import constant_realization
from magspec.feshbach import (
    feshbach_reduce,
    gamma_degree_check,
    identity_residuals,
    remainder_sum,
    vectorfield_check,
    wegner_mc,
)
from magspec.fields import PeriodicBackground
from magspec.geometry import LatticeGeometry
from magspec.construction import reality_check
from magspec.models import (
    chain_random_model,
    construction_certificate,
    continuum_cosine,
    lattice_random_model,
)
from magspec.operators import all_plaquette_fluxes, apply_gauge, assemble_continuum, assemble_lattice, _wrap_angle
from magspec.spectral import ids_from_eigenvalues, run_ensemble, solve, track_gap_edges
from magspec.spectral import IDSCurve


def _report(name, detail):
    print(f"\nACCEPTANCE PASS — {name}: {detail}")


WEGNER_MODEL = dict(va=8.0, vb=12.0, eps=3.0, u_scale=24.0)
LIFSHITZ_MODEL = dict(va=8.0, vb=12.0, eps=3.0, u_scale=3.0)


def _wegner_factory(L):
    return lattice_random_model(L=int(L), **WEGNER_MODEL)


def test_lattice_spectra():
    L = 32
    g = LatticeGeometry(2, (L, L))
    op = assemble_lattice("edge_laplacian", g, np.zeros((2, L, L)))
    vals = solve(op, "full").eigenvalues
    k1, k2 = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
    exact = np.sort((4 - 2 * np.cos(2 * np.pi * k1 / L) - 2 * np.cos(2 * np.pi * k2 / L)).ravel())
    err = float(np.max(np.abs(vals - exact)))
    assert abs(vals[0]) <= 1e-10 and abs(vals[-1] - 8.0) <= 1e-10
    assert err <= 1e-10
    hop = solve(assemble_lattice("hopping", g, np.zeros((2, L, L))), "full").eigenvalues
    assert hop[0] >= -4 - 1e-12 and hop[-1] <= 4 + 1e-12
    _report("lattice spectra", f"edge-laplacian on [0,8] err {err:.2e}; hopping in [-4,4]")


def test_gauge_invariance():
    model = lattice_random_model(L=16, **LIFSHITZ_MODEL)
    op = model.operator(0.3, index=0, master_seed=4)
    base_vals = solve(op, "full").eigenvalues
    base_flux = all_plaquette_fluxes(op, (0, 1))
    rng = np.random.default_rng(12345)
    worst_eig, worst_flux = 0.0, 0.0
    for _ in range(50):
        chi = rng.uniform(-np.pi, np.pi, size=op.geometry.sides)
        gop = apply_gauge(op, chi)
        vals = solve(gop, "full").eigenvalues
        flux = all_plaquette_fluxes(gop, (0, 1))
        worst_eig = max(worst_eig, float(np.max(np.abs(vals - base_vals))))
        worst_flux = max(worst_flux, float(np.max(np.abs(_wrap_angle(flux - base_flux)))))
    assert worst_eig <= 1e-10
    assert worst_flux <= 1e-12
    _report("gauge invariance", f"50 fields: eig err {worst_eig:.2e}, flux err {worst_flux:.2e}")


def test_bloch_torus_oracle():
    cases = []
    g_free = LatticeGeometry(2, (8, 8), cell=(2, 2))
    cases.append(("free", g_free, PeriodicBackground(g_free, np.zeros((2, 2)))))
    g_stag = LatticeGeometry(2, (8, 8), cell=(2, 2))
    x1, x2 = np.meshgrid(np.arange(2), np.arange(2), indexing="ij")
    cases.append(("period-2 gapped", g_stag, PeriodicBackground(g_stag, 2.0 * x1 + 3.0 * x2)))
    g_mag = LatticeGeometry(2, (8, 8), spacing=0.5, cell=(4, 4))
    xs = np.arange(4) * 0.5
    xm1, xm2 = np.meshgrid(xs, xs, indexing="ij")
    a0 = np.stack([np.sin(np.pi * xm1) * np.cos(np.pi * xm2), np.cos(np.pi * xm1)])
    cases.append(
        ("magnetic eps>0", g_mag,
         PeriodicBackground(g_mag, 2 * (1 - np.cos(np.pi * xm1)), a0, coupling_eps=0.4))
    )
    worst = 0.0
    for name, g, bg in cases:
        torus = solve(assemble_continuum(g, bg), "full").eigenvalues
        union = np.sort(np.concatenate([
            np.linalg.eigvalsh(bloch_reduce(bg, g, th).reduced_matrix)
            for th in commensurate_thetas(g)
        ]))
        worst = max(worst, float(np.max(np.abs(torus - union))))
    assert worst <= 1e-10
    _report("Bloch-torus oracle", f"3 backgrounds, worst union error {worst:.2e}")


def test_construction_certificate():
    cert = construction_certificate(
        lambda m: continuum_cosine(m=m), [6, 12, 24], eps=0.25, u_scale=1.0
    )
    period = max(r["periodicity_defect"] for r in cert["rows"])
    assert period <= 1e-12
    for order in cert["annihilation_orders"]:
        assert 1.8 <= order <= 2.2
    for order in cert["psi1_orders"]:
        assert order >= 1.8
    assert cert["rows"][-1]["psi1_l2"] < cert["rows"][0]["psi1_l2"] / 8
    assert cert["definiteness"] in ("positive", "negative")
    entries = np.asarray(cert["condition_entries"])
    assert entries.shape == (1, 1)
    assert cert["margin"] > 1e-6 * float(np.abs(entries).max())
    assert cert["edge_simple"] and cert["edge_nondegenerate"]
    _report(
        "construction certificate",
        f"periodicity {period:.1e}; annihilation orders {np.round(cert['annihilation_orders'], 3)}; "
        f"psi1 orders {np.round(cert['psi1_orders'], 3)}; condition {cert['definiteness']} "
        f"margin {cert['margin']:.3e}",
    )


def test_reality_lemma():
    model = lattice_random_model(L=16, **LIFSHITZ_MODEL)
    g = model.geometry
    bg0 = PeriodicBackground(g, model.background.potential)
    bands = band_structure(bg0, g, 8, store_edge_vectors=False)
    gap = detect_gap(bands, (model.gap.lower_edge - 1, model.gap.upper_edge + 1))
    st = edge_states(bands, gap)[0]
    rep = reality_check(st.vector, st.theta, g)
    assert rep["collinear"] and rep["residual"] <= 1e-8
    assert rep["theta_in_half_dual_lattice"]
    x = np.arange(5)
    generic = reality_check(np.exp(1j * 2 * np.pi * x / 5))
    assert not generic["collinear"]
    _report(
        "reality lemma",
        f"edge state residual {rep['residual']:.2e}; generic ring residual "
        f"{generic['residual']:.3f} (not collinear)",
    )


def test_feshbach_identity_suite():
    sizes = (40, 48, 56, 64, 72, 80)
    lambdas = (0.0, 0.02, 0.05)
    worst = {"resolvent": 0.0, "g": 0.0, "gamma": 0.0, "vf": 0.0, "degree": 0.0}
    slopes = []
    for i in range(20):
        model = chain_random_model(L=sizes[i % len(sizes)])
        real = model.realization(i, master_seed=31)
        h0, h1, h2 = model.split(real)
        gap = (model.gap.lower_edge, model.gap.upper_edge)
        e0 = model.gap.midpoint
        for lam in lambdas:
            res = identity_residuals(h0, h1, h2, lam, e0, gap)
            worst["resolvent"] = max(worst["resolvent"], res["resolvent"])
            worst["g"] = max(worst["g"], res["g_inverse"])
            worst["gamma"] = max(worst["gamma"], res["gamma_expansion"])
            worst["degree"] = max(
                worst["degree"], gamma_degree_check(res["decomposition"], lam)
            )
        vf = vectorfield_check(model.split_family(), real.omegas, 0.05, e0, gap)
        worst["vf"] = max(worst["vf"], vf["residual"])
        lam_grid = np.array([0.01, 0.02, 0.03, 0.05])
        sums = [remainder_sum(feshbach_reduce(h0, h1, h2, lam, e0, gap), lam)
                for lam in lam_grid]
        slopes.append(float(np.polyfit(np.log(lam_grid), np.log(sums), 1)[0]))
    assert worst["resolvent"] <= 1e-8
    assert worst["g"] <= 1e-8
    assert worst["gamma"] <= 1e-10
    assert worst["degree"] <= 1e-9
    assert worst["vf"] <= 1e-6
    for slope in slopes:
        assert slope == pytest.approx(2.0, abs=0.1)
    _report(
        "Feshbach identity suite",
        f"20 instances: worst residuals resolvent {worst['resolvent']:.1e}, "
        f"G {worst['g']:.1e}, expansion {worst['gamma']:.1e}, degree-4 {worst['degree']:.1e}, "
        f"vector field {worst['vf']:.1e}; remainder slopes "
        f"[{min(slopes):.3f}, {max(slopes):.3f}]",
    )


def test_wegner_probe():
    lam = 0.1
    base = _wegner_factory(16)
    gap = base.gap
    track = track_gap_edges(base, [0.0, lam], gap, ensemble_size=8, master_seed=3)
    f = gap.upper_edge - float(track.upper_edges[-1])
    assert f > 0
    eta_max = f / 3
    e0 = gap.upper_edge - 2.2 * eta_max
    etas = [eta_max / 8, eta_max / 4, eta_max / 2, eta_max]
    out = wegner_mc(
        _wegner_factory, e0, etas, 2.0, [16, 24, 32], 500, lam,
        master_seed=11, gap=(gap.lower_edge, gap.upper_edge),
    )
    probes = out["probes"]
    for volume in {p.volume for p in probes}:
        hits = [p.hits for p in probes if p.volume == volume]
        assert hits == sorted(hits)  # nested events, exactly
    assert out["all_consistent"]
    assert not out["degenerate"]
    total_hits = sum(p.hits for p in probes)
    assert total_hits > 0
    _report(
        "Wegner probe",
        f"E0 = E+ - {gap.upper_edge - e0:.2e}, C-hat {out['c_hat']:.3e}, "
        f"{total_hits} hits over {len(probes)} cells, all Wilson-consistent",
    )


def test_window_concentration():
    lam = 0.1
    base = _wegner_factory(16)
    gap = (base.gap.lower_edge, base.gap.upper_edge)
    e0 = base.gap.midpoint
    rows = window_concentration(_wegner_factory, e0, [16, 32, 64], 200, lam,
                            master_seed=13, gap=gap)
    for a, b in zip(rows, rows[1:]):
        assert b.expectation <= a.expectation + 2 * (a.stderr + b.stderr) + 1e-15
    for r in rows:
        assert r.prob_nonempty <= r.mean_count + 1e-15
    zero_rows = window_concentration(_wegner_factory, e0, [16, 32, 64], 3, 0.0,
                                 master_seed=13, gap=gap)
    assert all(r.expectation == 0.0 for r in zero_rows)
    _report(
        "KW concentration",
        f"expectations {[f'{r.expectation:.2e}' for r in rows]} nonincreasing within CI; "
        "exactly 0 at λ=0",
    )


def test_resolvent_decay():
    model16 = _wegner_factory(16)
    e_mid = model16.gap.midpoint
    probes = []
    for L in (16, 32):
        model = _wegner_factory(L)
        op = model.operator(0.0, realization=constant_realization(model.geometry, 0.0))
        probes.append(resolvent_decay(op, e_mid))
    gamma = decay_rate(probes)
    assert gamma > 0
    assert probes[1].norm < probes[0].norm
    op16 = _wegner_factory(16).operator(
        0.0, realization=constant_realization(model16.geometry, 0.0)
    )
    g = op16.geometry
    w = commutator_with_cutoff(op16, smooth_cutoff(g, probes[0].width))
    core = (g.boundary_distance() >= probes[0].core_radius).ravel()
    inv = np.linalg.inv(op16.dense() - e_mid * np.eye(op16.n))
    oracle = float(np.linalg.norm((w @ inv)[:, core], 2))
    assert probes[0].norm == pytest.approx(oracle, rel=1e-8)
    _report(
        "resolvent decay",
        f"norms {probes[0].norm:.3e} -> {probes[1].norm:.3e}, γ̂ = {gamma:.4f} > 0; "
        f"dense oracle match {abs(probes[0].norm - oracle):.1e}",
    )


def test_feynman_hellman():
    sizes = (40, 48, 56, 64, 72, 80)
    worst_diff, all_bounds = 0.0, True
    for i in range(10):
        model = chain_random_model(L=sizes[i % len(sizes)])
        real = model.realization(i, master_seed=47)
        split = model.split(real)
        j = model.geometry.n_sites // 3
        rep = fh_derivative(split, j, 0.05, model.u_sup_norm_sq)
        worst_diff = max(
            worst_diff,
            abs(rep.analytic - rep.finite_difference) / max(1.0, abs(rep.analytic)),
        )
        all_bounds &= abs(rep.second_order_term) <= rep.second_order_bound + 1e-15
    assert worst_diff <= 1e-6
    assert all_bounds
    _report(
        "Feynman-Hellman",
        f"10 instances: worst |analytic - FD| (rel) {worst_diff:.2e}; "
        "second-order bound holds on all",
    )


def test_lifshitz_indicator():
    # fitter correctness on the exact functional form, decoupled from physics
    grid = np.linspace(0.0, 2.0, 900)
    synth = synthetic_lifshitz_curve(0.4, 2, grid)
    synth_fit = lifshitz_fit(synth, 0.4, 2)
    assert abs(synth_fit.slope - (-1.0)) < 1e-3

    lam = 1.5
    model = lattice_random_model(L=24, **LIFSHITZ_MODEL)
    gap = model.gap
    track = track_gap_edges(model, [0.0, lam], gap, ensemble_size=12, master_seed=3)
    edge = float(track.upper_edges[-1])
    grid = np.linspace(edge - 0.02, gap.upper_edge + 0.5, 700)
    vol = model.geometry.n_sites

    def worker(i):
        op = model.operator(lam, index=i, master_seed=21)
        return ids_from_eigenvalues(solve(op, "full").eigenvalues, vol, grid)

    res = run_ensemble(worker, 2000)
    assert res.n_failed == 0
    stack = np.stack(res.values)
    curve = IDSCurve(grid, stack.mean(axis=0), vol, 2000,
                     stack.std(axis=0, ddof=1) / np.sqrt(2000))
    fit = lifshitz_fit(curve, edge, 2, upper_mass=3e-3)
    assert -1.4 <= fit.slope <= -0.6
    assert fit.superpolynomial[1] and fit.superpolynomial[2] and fit.superpolynomial[3]
    _report(
        "Lifshitz indicator",
        f"synthetic fitter slope {synth_fit.slope:.5f}; ensemble slope {fit.slope:.3f} "
        f"(CI [{fit.slope_ci[0]:.3f}, {fit.slope_ci[1]:.3f}], target -1) on "
        f"{fit.n_points} points; superpolynomial n<=3 ok",
    )


def test_gap_edge_drift():
    model = _wegner_factory(16)
    gap = model.gap
    lams = [0.0, 0.02, 0.05, 0.1]
    track = track_gap_edges(model, lams, gap, ensemble_size=8, master_seed=3)
    assert track.closed_at is None
    assert track.upper_edges[0] == pytest.approx(gap.upper_edge, abs=1e-8)
    drift = gap.upper_edge - track.upper_edges
    assert np.all(drift >= -1e-10)
    pos = track.lambdas > 0
    assert np.isfinite(track.nu_bound) and track.nu_bound >= 0
    assert np.all(drift[pos] <= track.nu_bound * track.lambdas[pos] * (1 + 1e-12))
    _report(
        "gap-edge drift",
        f"E+(0) - E+ = {gap.upper_edge - track.upper_edges[0]:.1e}; "
        f"drift {np.round(drift[1:], 6)} <= ν̂λ with ν̂ = {track.nu_bound:.4f} "
        f"(LSQ slope {track.fit_nu:.4f})",
    )
