"""Deterministic matplotlib renderings of the experiment outputs.

Every figure uses a fixed canvas, the bundled DejaVu fonts, a pinned SVG
hash salt, and no timestamps, so rendering the same data twice yields
byte-identical files.
"""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "magspec"
matplotlib.rcParams["font.family"] = "DejaVu Sans"

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

_FIGSIZE = (6.0, 4.0)
_DPI = 120


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None}, dpi=_DPI)
    plt.close(fig)


def render_bands(theta_labels, bands, path, gap=None):
    """Band structure along the flattened θ-grid index, optional gap shading."""
    fig, ax = plt.subplots(figsize=_FIGSIZE, dpi=_DPI)
    x = np.arange(bands.shape[1])
    for n in range(bands.shape[0]):
        ax.plot(x, bands[n], lw=0.9)
    if gap is not None and gap.get("found"):
        ax.axhspan(gap["lower_edge"], gap["upper_edge"], color="0.85", zorder=0)
        ax.axhline(gap["lower_edge"], color="0.4", lw=0.7, ls=":")
        ax.axhline(gap["upper_edge"], color="0.4", lw=0.7, ls=":")
    ax.set_xlabel("flattened quasi-momentum grid index")
    ax.set_ylabel("energy")
    ax.set_title("Floquet bands")
    fig.tight_layout()
    _save(fig, path)


def render_ids(energies, values, path, edges=None, stderr=None):
    fig, ax = plt.subplots(figsize=_FIGSIZE, dpi=_DPI)
    ax.plot(energies, values, lw=1.2, color="C0")
    if stderr is not None and np.any(stderr > 0):
        ax.fill_between(
            energies, values - 2 * stderr, values + 2 * stderr,
            color="C0", alpha=0.25, lw=0,
        )
    if edges:
        for e in edges:
            ax.axvline(e, color="C3", lw=0.8, ls="--")
    ax.set_xlabel("energy")
    ax.set_ylabel("integrated density of states")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title("IDS")
    fig.tight_layout()
    _save(fig, path)


def render_lifshitz(log_energies, loglog_values, slope, intercept, target, path):
    """Double-log tail points with the fitted line and the reference slope."""
    fig, ax = plt.subplots(figsize=_FIGSIZE, dpi=_DPI)
    ax.plot(log_energies, loglog_values, "o", ms=4, color="C0", label="tail points")
    xs = np.array([log_energies.min(), log_energies.max()])
    ax.plot(xs, slope * xs + intercept, color="C1", lw=1.2,
            label=f"fit slope {slope:.3f}")
    anchor = loglog_values.mean() - target * log_energies.mean()
    ax.plot(xs, target * xs + anchor, color="C3", lw=1.0, ls="--",
            label=f"reference slope {target:g}")
    ax.set_xlabel("log(E - edge)")
    ax.set_ylabel("log|log(N - N(edge))|")
    ax.set_title("Lifshitz tail")
    ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    _save(fig, path)


def render_wegner(etas, p_hats, ci_los, ci_his, q, c_hat, volume, path):
    """p̂ vs η on log-log, with the fitted C η^{1/q} |Λ| reference."""
    fig, ax = plt.subplots(figsize=_FIGSIZE, dpi=_DPI)
    etas = np.asarray(etas, dtype=float)
    p = np.asarray(p_hats, dtype=float)
    pos = p > 0
    ax.errorbar(
        etas, np.maximum(p, 1e-12),
        yerr=[np.maximum(p - np.asarray(ci_los), 0), np.maximum(np.asarray(ci_his) - p, 0)],
        fmt="o", ms=4, capsize=3, color="C0", label=f"|Λ| = {volume}",
    )
    if c_hat > 0:
        ref = c_hat * etas ** (1.0 / q) * volume
        ax.plot(etas, ref, color="C3", ls="--", lw=1.0,
                label=f"Ĉ η^(1/{q:g}) |Λ|")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("window half-width η")
    ax.set_ylabel("estimated probability")
    ax.set_title("Wegner probe")
    ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    _save(fig, path)


def render_decay(sides, norms, gamma, path):
    fig, ax = plt.subplots(figsize=_FIGSIZE, dpi=_DPI)
    sides = np.asarray(sides, dtype=float)
    norms = np.asarray(norms, dtype=float)
    ax.semilogy(sides, norms, "o-", color="C0", label="‖W(g_L) R(E) χ_core‖")
    if gamma is not None:
        ref = norms[0] * np.exp(-gamma * (sides - sides[0]))
        ax.semilogy(sides, ref, color="C3", ls="--", lw=1.0, label=f"γ̂ = {gamma:.3f}")
    ax.set_xlabel("side length L")
    ax.set_ylabel("norm")
    ax.set_title("boundary-resolvent decay")
    ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    _save(fig, path)
