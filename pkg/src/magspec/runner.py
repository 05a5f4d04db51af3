"""Experiment orchestration: build the model from a config, dispatch, and
write deterministic CSV/JSON payloads (plus figures) with a run manifest.

Payload bytes are a pure function of (config, seed): floats are written
with shortest round-trip repr, JSON keys are sorted, and wall-clock data
lives only in the manifest.  Failed runs leave their partial outputs under
``quarantine/`` inside the output directory.
"""

from __future__ import annotations

import hashlib
import json
import shutil
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bloch import band_structure, detect_gap, require_gap
from .config import ExperimentConfig, parse_config
from .disorder import DisorderModel, constant_realization
from .errors import ConfigError, ModelError
from .fields import PeriodicBackground
from .geometry import LatticeGeometry
from .gridfile import load_background, load_profile, write_cell_file
from .models import (
    RandomModel,
    chain_random_model,
    construction_certificate,
    continuum_cosine,
    free_model,
    lattice_random_model,
)
from .spectral import (
    IDSCurve,
    default_energy_grid,
    ids_from_eigenvalues,
    run_ensemble,
    solve,
    track_gap_edges,
)
from . import figures
from .analysis import (
    decay_rate,
    fh_derivative,
    window_concentration,
    lifshitz_fit,
    resolvent_decay,
)
from .feshbach import identity_residuals, remainder_sum, vectorfield_check, wegner_mc


# ---------------------------------------------------------------------------
# deterministic writers

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return {"re": obj.real.tolist(), "im": obj.imag.tolist()}
        return obj.tolist()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def write_json(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(_jsonable(payload), sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )


# ---------------------------------------------------------------------------
# model building

def build_model(cfg: ExperimentConfig) -> RandomModel:
    mc = cfg.model
    if mc.preset == "lattice_random":
        return lattice_random_model(
            L=mc.preset_params["L"],
            va=mc.preset_params["va"],
            vb=mc.preset_params["vb"],
            eps=mc.preset_params["eps"],
            u_scale=mc.preset_params["u_scale"],
        )
    if mc.preset == "chain":
        return chain_random_model(L=mc.preset_params["L"], v=mc.preset_params["v"])
    if mc.preset == "continuum_cosine":
        geometry, background = continuum_cosine(
            m=mc.preset_params["m"], va=mc.preset_params["va"], vb=mc.preset_params["vb"]
        )
        from .disorder import uniform_disorder

        return RandomModel(
            geometry=geometry, background=background, profile=None,
            disorder=uniform_disorder(),
        )
    if mc.preset == "free":
        geometry, background = free_model(
            mc.preset_params["d"], mc.preset_params["L"], mc.preset_params["spacing"]
        )
        from .disorder import uniform_disorder

        return RandomModel(
            geometry=geometry, background=background, profile=None,
            disorder=uniform_disorder(),
        )
    geo = mc.geometry
    geometry = LatticeGeometry(
        dimension=geo["dimension"],
        sides=tuple(geo["sides"]),
        spacing=float(geo["spacing"]),
        cell=tuple(geo["cell"]) if geo["cell"] is not None else None,
    )
    background = load_background(mc.background_file, geometry, eps=mc.eps)
    profile = load_profile(mc.profile_file, geometry) if mc.profile_file else None
    if mc.disorder is not None:
        dist = mc.disorder["distribution"]
        if dist and dist[0] == "table":
            disorder = DisorderModel(("table", np.asarray(dist[1]), np.asarray(dist[2])))
        else:
            disorder = DisorderModel(tuple(dist))
    else:
        from .disorder import uniform_disorder

        disorder = uniform_disorder()
    return RandomModel(
        geometry=geometry, background=background, profile=profile, disorder=disorder
    )


def _model_factory(cfg: ExperimentConfig):
    """Side-length -> RandomModel, for the multi-volume experiments."""
    mc = cfg.model
    if mc.preset == "lattice_random":
        return lambda L: lattice_random_model(
            L=int(L), va=mc.preset_params["va"], vb=mc.preset_params["vb"],
            eps=mc.preset_params["eps"], u_scale=mc.preset_params["u_scale"],
        )
    if mc.preset == "chain":
        return lambda L: chain_random_model(L=int(L), v=mc.preset_params["v"])
    base = build_model(cfg)

    def fixed(L):
        if int(L) != min(base.geometry.sides):
            raise ConfigError(
                f"file-based model has fixed side {min(base.geometry.sides)}; "
                f"cannot rebuild at L={L}"
            )
        return base

    return fixed


def _model_gap(model: RandomModel, theta_resolution: int = 8):
    if model.gap is not None:
        return model.gap
    bands = band_structure(
        model.background, model.geometry, theta_resolution, store_edge_vectors=False
    )
    window = (float(np.min(bands.bands)), float(np.max(bands.bands)))
    return require_gap(detect_gap(bands, window))


def _resolve_energy(spec, gap) -> float:
    if isinstance(spec, str):
        if spec != "midgap":
            raise ConfigError(f"unknown symbolic energy {spec!r} (only 'midgap')")
        return float(gap.midpoint)
    return float(spec)


# ---------------------------------------------------------------------------
# experiment implementations

def _run_bands(cfg: ExperimentConfig, out: Path) -> dict:
    model = build_model(cfg)
    bands = band_structure(
        model.background, model.geometry, cfg.params["theta_resolution"],
        phases=cfg.params["phases"], store_edge_vectors=False,
    )
    d = model.geometry.dimension
    header = [f"theta{a + 1}" for a in range(d)] + [
        f"E{n + 1}" for n in range(bands.n_bands)
    ]
    rows = [
        list(bands.theta_grid[t]) + list(bands.bands[:, t])
        for t in range(bands.theta_grid.shape[0])
    ]
    write_csv(out / "bands.csv", header, rows)
    gap_payload = None
    if cfg.params["window"] is not None:
        gap = detect_gap(bands, tuple(cfg.params["window"]))
        gap_payload = {
            "found": gap.found,
            "lower_edge": gap.lower_edge,
            "upper_edge": gap.upper_edge,
            "frame": list(gap.frame),
            "edge_band_index": gap.edge_band_index,
            "minimizers": gap.minimizers if gap.found else [],
            "simple": gap.simple,
        }
        write_json(out / "gap.json", gap_payload)
    if cfg.figures:
        figures.render_bands(None, bands.bands, out / "bands.svg", gap=gap_payload)
    return {"n_bands": bands.n_bands, "n_theta": int(bands.theta_grid.shape[0])}


def _run_gh_certify(cfg: ExperimentConfig, out: Path) -> dict:
    mc = cfg.model
    if mc.preset == "continuum_cosine":
        meshes = cfg.params["meshes"] or [6, 12, 24]

        def family(m):
            return continuum_cosine(
                m=int(m), va=mc.preset_params["va"], vb=mc.preset_params["vb"]
            )

    elif mc.preset == "lattice_random":
        meshes = [1]

        def family(_m):
            model = lattice_random_model(
                L=mc.preset_params["L"], va=mc.preset_params["va"],
                vb=mc.preset_params["vb"], eps=mc.preset_params["eps"],
                u_scale=mc.preset_params["u_scale"],
            )
            return model.geometry, PeriodicBackground(
                model.geometry, model.background.potential
            )

    else:
        meshes = [1]
        base = build_model(cfg)

        def family(_m):
            return base.geometry, PeriodicBackground(
                base.geometry, base.background.potential
            )

    cert = construction_certificate(
        family, meshes, eps=cfg.params["eps"], u_scale=cfg.params["u_scale"],
        theta_resolution=cfg.params["theta_resolution"],
    )
    write_json(out / "certificate.json", {k: v for k, v in cert.items() if k != "cell_data"})
    cell = cert["cell_data"]
    write_cell_file(
        out / "certified_cells.txt", cell["geometry"],
        {"V0": cell["V0"], "A0": cell["A0"], "u": cell["u"], "u_mask": cell["u_mask"]},
    )
    return {"definiteness": cert["definiteness"], "margin": cert["margin"]}


def _ids_curve(cfg: ExperimentConfig, model: RandomModel, lam: float, grid: np.ndarray) -> IDSCurve:
    vol = model.geometry.n_sites

    def worker(i):
        op = model.operator(lam, index=i, master_seed=cfg.master_seed)
        evals = solve(op, "full").eigenvalues
        return ids_from_eigenvalues(evals, vol, grid)

    if lam == 0.0 or model.profile is None:
        op = model.operator(0.0, realization=constant_realization(model.geometry, 0.0))
        evals = solve(op, "full").eigenvalues
        vals = ids_from_eigenvalues(evals, vol, grid)
        return IDSCurve(grid, vals, vol, 1, np.zeros_like(grid))
    result = run_ensemble(worker, cfg.ensemble_size, workers=cfg.workers)
    if result.n_failed:
        raise ModelError(f"{result.n_failed} realizations failed: {result.failures[:3]}")
    stack = np.stack(result.values)
    stderr = (
        stack.std(axis=0, ddof=1) / np.sqrt(stack.shape[0])
        if stack.shape[0] > 1 else np.zeros(grid.shape)
    )
    return IDSCurve(grid, stack.mean(axis=0), vol, stack.shape[0], stderr)


def _run_ids(cfg: ExperimentConfig, out: Path) -> dict:
    model = build_model(cfg)
    lam = float(cfg.params["lambda"])
    if cfg.params["energy_min"] is None or cfg.params["energy_max"] is None:
        ref = model.operator(0.0, realization=constant_realization(model.geometry, 0.0))
        evals = solve(ref, "full").eigenvalues
        grid = default_energy_grid(evals, cfg.params["energy_points"])
    else:
        grid = np.linspace(
            cfg.params["energy_min"], cfg.params["energy_max"], cfg.params["energy_points"]
        )
    if cfg.params["dump_eigenvalues"] and model.profile is not None:
        from .gridfile import write_eigenvalues_gz

        for i in range(cfg.ensemble_size):
            op = model.operator(lam, index=i, master_seed=cfg.master_seed)
            write_eigenvalues_gz(
                out / f"eigenvalues-{i:04d}.txt.gz", solve(op, "full").eigenvalues
            )
    curve = _ids_curve(cfg, model, lam, grid)
    write_csv(
        out / "ids.csv",
        ["energy", "value", "stderr"],
        zip(curve.energy_grid, curve.values, curve.standard_errors),
    )
    if cfg.figures:
        edges = None
        if model.gap is not None:
            edges = [model.gap.lower_edge, model.gap.upper_edge]
        figures.render_ids(
            curve.energy_grid, curve.values, out / "ids.svg",
            edges=edges, stderr=curve.standard_errors,
        )
    return {"ensemble": curve.ensemble_size, "volume": curve.volume}


def _run_lifshitz(cfg: ExperimentConfig, out: Path) -> dict:
    model = build_model(cfg)
    if model.profile is None:
        raise ConfigError("lifshitz experiment needs a disorder profile in the model")
    lam = float(cfg.params["lambda"])
    gap = _model_gap(model)
    track = track_gap_edges(
        model, [0.0, lam], gap, ensemble_size=cfg.params["edge_ensemble"],
        master_seed=cfg.master_seed + 1,
    )
    write_csv(
        out / "gaptrack.csv",
        ["lambda", "lower_edge", "upper_edge"],
        zip(track.lambdas, track.lower_edges, track.upper_edges),
    )
    edge = float(track.upper_edges[-1])
    grid = np.linspace(
        edge - 0.02, gap.upper_edge + cfg.params["span_above"], cfg.params["energy_points"]
    )
    curve = _ids_curve(cfg, model, lam, grid)
    fit = lifshitz_fit(
        curve, edge, model.geometry.dimension,
        n_min=cfg.params["n_min"], upper_mass=3e-3,
    )
    write_csv(
        out / "ids.csv",
        ["energy", "value", "stderr"],
        zip(curve.energy_grid, curve.values, curve.standard_errors),
    )
    intercept = float(np.mean(fit.loglog_values) - fit.slope * np.mean(fit.log_energies))
    payload = {
        "band_edge": fit.band_edge,
        "deterministic_edge": gap.upper_edge,
        "fit_window": list(fit.fit_window),
        "slope": fit.slope,
        "slope_ci": list(fit.slope_ci),
        "intercept": intercept,
        "target": fit.target,
        "n_points": fit.n_points,
        "superpolynomial": {str(k): v for k, v in fit.superpolynomial.items()},
        "log_energies": fit.log_energies,
        "loglog_values": fit.loglog_values,
    }
    write_json(out / "lifshitz.json", payload)
    if cfg.figures:
        figures.render_lifshitz(
            fit.log_energies, fit.loglog_values, fit.slope, intercept, fit.target,
            out / "lifshitz.svg",
        )
    return {"slope": fit.slope, "target": fit.target}


def _run_wegner(cfg: ExperimentConfig, out: Path) -> dict:
    factory = _model_factory(cfg)
    sides = [int(s) for s in cfg.params["sides"]]
    gap = _model_gap(factory(sides[0]))
    e0 = _resolve_energy(cfg.params["e0"], gap)
    result = wegner_mc(
        factory, e0, cfg.params["etas"], float(cfg.params["q"]), sides,
        cfg.ensemble_size, float(cfg.params["lambda"]),
        master_seed=cfg.master_seed, gap=(gap.lower_edge, gap.upper_edge),
        workers=cfg.workers,
    )
    rows = []
    for probe, ok in zip(result["probes"], result["consistent_95"]):
        lo, hi = probe.wilson
        rows.append(
            [probe.eta, probe.volume, probe.lam, probe.hits, probe.trials,
             probe.p_hat, lo, hi, ok]
        )
    write_csv(
        out / "wegner.csv",
        ["eta", "volume", "lambda", "hits", "trials", "p_hat", "ci_low", "ci_high",
         "consistent_95"],
        rows,
    )
    write_json(
        out / "wegner.json",
        {
            "e0": e0, "q": cfg.params["q"], "c_hat": result["c_hat"],
            "degenerate": result["degenerate"], "all_consistent": result["all_consistent"],
        },
    )
    if cfg.figures:
        biggest = max(p.volume for p in result["probes"])
        sel = [p for p in result["probes"] if p.volume == biggest]
        figures.render_wegner(
            [p.eta for p in sel], [p.p_hat for p in sel],
            [p.wilson[0] for p in sel], [p.wilson[1] for p in sel],
            float(cfg.params["q"]), result["c_hat"], biggest, out / "wegner.svg",
        )
    return {"c_hat": result["c_hat"], "all_consistent": result["all_consistent"]}


def _run_kw(cfg: ExperimentConfig, out: Path) -> dict:
    factory = _model_factory(cfg)
    sides = [int(s) for s in cfg.params["sides"]]
    gap = _model_gap(factory(sides[0]))
    e0 = _resolve_energy(cfg.params["e0"], gap)
    rows = window_concentration(
        factory, e0, sides, cfg.ensemble_size, float(cfg.params["lambda"]),
        master_seed=cfg.master_seed, gap=(gap.lower_edge, gap.upper_edge),
        workers=cfg.workers,
    )
    write_csv(
        out / "kw.csv",
        ["side", "volume", "window", "expectation", "stderr", "prob_nonempty",
         "mean_count"],
        [
            [r.side, r.volume, r.window, r.expectation, r.stderr, r.prob_nonempty,
             r.mean_count]
            for r in rows
        ],
    )
    write_json(
        out / "kw.json",
        {
            "e0": e0,
            "expectations": [r.expectation for r in rows],
            "markov_ok": all(r.prob_nonempty <= r.mean_count + 1e-15 for r in rows),
        },
    )
    return {"expectations": [r.expectation for r in rows]}


def _run_decay(cfg: ExperimentConfig, out: Path) -> dict:
    factory = _model_factory(cfg)
    sides = [int(s) for s in cfg.params["sides"]]
    gap = _model_gap(factory(sides[0]))
    energy = _resolve_energy(cfg.params["energy"], gap)
    lam = float(cfg.params["lambda"])
    probes = []
    for side in sides:
        model = factory(side)
        if lam == 0.0:
            op = model.operator(0.0, realization=constant_realization(model.geometry, 0.0))
        else:
            op = model.operator(lam, index=0, master_seed=cfg.master_seed)
        width = max(1, int(round(side * float(cfg.params["width_fraction"]))))
        probes.append(resolvent_decay(op, energy, width=width))
    gamma = decay_rate(probes) if len(probes) >= 2 else None
    write_csv(
        out / "decay.csv",
        ["side", "norm", "gamma_hat"],
        [[p.side, p.norm, gamma if gamma is not None else ""] for p in probes],
    )
    if cfg.figures:
        figures.render_decay(
            [p.side for p in probes], [p.norm for p in probes], gamma, out / "decay.svg"
        )
    return {"gamma_hat": gamma}


def _feshbach_instances(cfg: ExperimentConfig, n_instances: int):
    mc = cfg.model
    sizes = (40, 48, 56, 64, 72, 80)
    for i in range(n_instances):
        length = sizes[i % len(sizes)]
        v = 3.0 if mc.preset != "chain" else mc.preset_params["v"]
        model = chain_random_model(L=length, v=v)
        yield i, model


def _run_feshbach_verify(cfg: ExperimentConfig, out: Path) -> dict:
    lambdas = [float(x) for x in cfg.params["lambdas"]]
    rows = []
    worst: dict[str, float] = {"resolvent": 0.0, "g_inverse": 0.0, "gamma_expansion": 0.0,
                               "vf": 0.0}
    slopes = []
    for i, model in _feshbach_instances(cfg, int(cfg.params["n_instances"])):
        real = model.realization(i, master_seed=cfg.master_seed)
        h0, h1, h2 = model.split(real)
        gap = (model.gap.lower_edge, model.gap.upper_edge)
        e0 = model.gap.midpoint
        for lam in lambdas:
            res = identity_residuals(h0, h1, h2, lam, e0, gap)
            rows.append([i, model.geometry.n_sites, lam, res["resolvent"],
                         res["g_inverse"], res["gamma_expansion"],
                         res["gamma_hermiticity"]])
            for key in ("resolvent", "g_inverse", "gamma_expansion"):
                worst[key] = max(worst[key], res[key])
        lam_vf = max(lambdas) if max(lambdas) > 0 else 0.05
        vf = vectorfield_check(
            model.split_family(), real.omegas, lam_vf, e0, gap,
            fd_step=float(cfg.params["fd_step"]),
        )
        worst["vf"] = max(worst["vf"], vf["residual"])
        lam_grid = np.array([0.01, 0.02, 0.03, 0.05])
        sums = []
        from .feshbach import feshbach_reduce

        for lam in lam_grid:
            dec = feshbach_reduce(h0, h1, h2, lam, e0, gap)
            sums.append(remainder_sum(dec, lam))
        slopes.append(float(np.polyfit(np.log(lam_grid), np.log(sums), 1)[0]))
    write_csv(
        out / "feshbach.csv",
        ["instance", "n", "lambda", "resolvent_residual", "g_residual",
         "gamma_residual", "gamma_hermiticity"],
        rows,
    )
    payload = {
        "worst_residuals": worst,
        "remainder_slopes": slopes,
        "mean_remainder_slope": float(np.mean(slopes)),
    }
    write_json(out / "feshbach.json", payload)
    return payload


def _run_fh_check(cfg: ExperimentConfig, out: Path) -> dict:
    lam = float(cfg.params["lambda"])
    rows = []
    worst = 0.0
    for i, model in _feshbach_instances(cfg, int(cfg.params["n_instances"])):
        real = model.realization(i, master_seed=cfg.master_seed + 17)
        split = model.split(real)
        n = model.geometry.n_sites
        j = n // 3 + int(cfg.params["band_offset"])
        rep = fh_derivative(split, j, lam, model.u_sup_norm_sq,
                            step=float(cfg.params["fd_step"]))
        diff = abs(rep.analytic - rep.finite_difference)
        worst = max(worst, diff / max(1.0, abs(rep.analytic)))
        rows.append([i, n, j, rep.eigenvalue, rep.analytic, rep.finite_difference,
                     diff, rep.second_order_term, rep.second_order_bound,
                     rep.h1_phi_norm])
    write_csv(
        out / "fh.csv",
        ["instance", "n", "index", "eigenvalue", "analytic", "finite_difference",
         "abs_diff", "second_order_term", "second_order_bound", "h1_phi_norm"],
        rows,
    )
    payload = {"worst_relative_difference": worst}
    write_json(out / "fh.json", payload)
    return payload


_DISPATCH = {
    "bands": _run_bands,
    "gh_certify": _run_gh_certify,
    "ids": _run_ids,
    "lifshitz": _run_lifshitz,
    "wegner": _run_wegner,
    "kw": _run_kw,
    "decay": _run_decay,
    "feshbach_verify": _run_feshbach_verify,
    "fh_check": _run_fh_check,
}


def run(
    config: ExperimentConfig | str,
    out_dir: str | None = None,
    seed: int | None = None,
    workers: int | None = None,
) -> dict:
    """Run one experiment; returns the summary dict written to the manifest."""
    cfg = parse_config(config) if not isinstance(config, ExperimentConfig) else config
    if seed is not None:
        cfg.master_seed = int(seed)
    if workers is not None:
        cfg.workers = int(workers)
    if out_dir is not None:
        cfg.output_directory = str(out_dir)
    out = Path(cfg.output_directory)
    out.mkdir(parents=True, exist_ok=True)
    staging = out / ".partial"
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir()
    t0 = time.time()
    try:
        summary = _DISPATCH[cfg.experiment](cfg, staging)
    except Exception:
        quarantine = out / "quarantine"
        if quarantine.exists():
            shutil.rmtree(quarantine)
        staging.rename(quarantine)
        raise
    manifest = {
        "experiment": cfg.experiment,
        "config_hash": hashlib.sha256(cfg.canonical_json().encode()).hexdigest(),
        "master_seed": cfg.master_seed,
        "magspec_version": __version__,
        "wall_time_seconds": time.time() - t0,
        "defaults_used": cfg.defaults_used,
        "summary": summary,
    }
    write_json(staging / "manifest.json", manifest)
    for item in staging.iterdir():
        target = out / item.name
        if target.exists():
            target.unlink()
        item.rename(target)
    staging.rmdir()
    return manifest
