"""Render the run report's figures to files next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {
    "exact": dict(color="black", lw=1.6, label="exact (grid)"),
    "l2nm": dict(color="tab:blue", lw=1.2, label="mixture projection (L2)"),
    "he": dict(color="tab:green", lw=1.2, label="exponential projection"),
    "ekf": dict(color="tab:red", lw=1.0, ls="--", label="extended Kalman"),
}


def _mark_failures(ax, rep):
    for name, t in rep.failures.items():
        if t is not None:
            ax.axvline(t, color=_STYLE[name]["color"], ls=":", lw=1.0)


def _finite(t, v):
    v = np.asarray(v, float)
    ok = np.isfinite(v)
    return np.asarray(t)[ok], v[ok]


def render_figures(rep, out_dir) -> list[Path]:
    """Write slices/residuals/tracks/levy PNGs; returns the created paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    made = []

    # densities at the selected time slices
    n_slices = rep.slice_indices.size
    ncols = min(5, max(1, n_slices))
    nrows = max(1, (n_slices + ncols - 1) // ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(3.0 * ncols, 2.4 * nrows),
                             sharex=True, sharey=False, squeeze=False)
    for si in range(nrows * ncols):
        ax = axes[si // ncols][si % ncols]
        if si >= n_slices:
            ax.axis("off")
            continue
        for name in ("exact", "l2nm", "he", "ekf"):
            if name in rep.slice_densities:
                vals = rep.slice_densities[name][si]
                if np.isfinite(vals).any():
                    ax.plot(rep.grid_xs, vals, **_STYLE[name])
        ax.set_title(f"t = {rep.times[rep.slice_indices[si]]:.3g}", fontsize=9)
    handles, labels = axes[0][0].get_legend_handles_labels()
    if handles:
        fig.legend(handles, labels, loc="lower center", ncol=len(handles),
                   fontsize=8, frameon=False)
    fig.suptitle(f"{rep.config.scenario.name}: densities at time slices")
    fig.tight_layout(rect=(0, 0.05, 1, 0.97))
    path = out / "slices.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    made.append(path)

    # L2 residual series
    fig, ax = plt.subplots(figsize=(7, 4))
    for name, series in rep.l2.items():
        ax.plot(*_finite(rep.times, series), **_STYLE[name])
    _mark_failures(ax, rep)
    ax.set_xlabel("t")
    ax.set_ylabel("L2 residual vs exact")
    ax.set_title(f"{rep.config.scenario.name}: L2 residuals")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = out / "residuals.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    made.append(path)

    # mean +/- sd tracks against the true state
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(rep.times, rep.record.x_path, color="0.4", lw=0.8,
            label="true state")
    for name, tr in rep.tracks.items():
        t, mean = _finite(rep.times, tr["mean"])
        _, sd = _finite(rep.times, tr["sd"])
        ax.plot(t, mean, **_STYLE[name])
        ax.fill_between(t, mean - sd, mean + sd,
                        color=_STYLE[name]["color"], alpha=0.12, lw=0)
    _mark_failures(ax, rep)
    ax.set_xlabel("t")
    ax.set_ylabel("state")
    ax.set_title(f"{rep.config.scenario.name}: mean and spread")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = out / "tracks.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    made.append(path)

    # Levy residuals and the best-possible particle bound
    fig, ax = plt.subplots(figsize=(7, 4))
    for name, series in rep.levy.items():
        ax.plot(*_finite(rep.times, series), **_STYLE[name])
    t, bound = _finite(rep.times, rep.particle_bound)
    if t.size:
        ax.plot(t, bound, color="tab:purple", lw=1.2,
                label=f"best {rep.n_particles}-particle bound")
    ax.axhline(rep.levy_floor, color="0.6", lw=0.8, ls=":",
               label="grid resolution floor")
    _mark_failures(ax, rep)
    ax.set_xlabel("t")
    ax.set_ylabel("Levy residual vs exact")
    ax.set_title(f"{rep.config.scenario.name}: Levy residuals")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = out / "levy.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    made.append(path)

    return made
