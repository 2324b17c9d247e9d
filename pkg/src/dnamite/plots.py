"""Figure rendering for shape functions and calibration reports.

Figures are written to files (SVG by default) next to the CSV reports;
the missing bin is excluded from continuous axes and shown in the title.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .interpret import ShapeCurve


def render_shape(curve: ShapeCurve, time_pos: int, path):
    t = float(curve.times[time_pos])
    fig, ax = plt.subplots(figsize=(6, 4))
    if isinstance(curve.source, tuple):
        _render_pair(ax, curve, time_pos)
    else:
        vals = curve.values[1:, time_pos]
        lo = curve.ci_lower[1:, time_pos]
        hi = curve.ci_upper[1:, time_pos]
        if isinstance(curve.edges, tuple):  # categorical levels
            x = np.arange(vals.size)
            ax.errorbar(x, vals, yerr=[vals - lo, hi - vals], fmt="o", capsize=3)
            ax.set_xticks(x, curve.edges, rotation=45, ha="right")
        else:
            edges = np.asarray(curve.edges, dtype=float)
            ax.stairs(vals, edges, baseline=None, lw=1.5)
            xs = np.repeat(edges, 2)[1:-1]
            ax.fill_between(xs, np.repeat(lo, 2), np.repeat(hi, 2), alpha=0.25, lw=0)
        ax.axhline(0.0, color="gray", lw=0.5)
        ax.set_xlabel(curve.name)
        ax.set_ylabel("contribution to logit CIF")
    if isinstance(curve.source, tuple):
        miss = float(curve.values[0, 0, time_pos])
    else:
        miss = float(curve.values[0, time_pos])
    ax.set_title(f"{curve.name} at t={t:g} (missing bin: {miss:+.3g})")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _render_pair(ax, curve: ShapeCurve, time_pos: int):
    grid = curve.values[1:, 1:, time_pos]
    im = ax.imshow(grid.T, origin="lower", aspect="auto", cmap="RdBu_r")
    ax.figure.colorbar(im, ax=ax, label="contribution to logit CIF")
    ax.set_xlabel(f"{curve.name.split('*')[0]} bin")
    ax.set_ylabel(f"{curve.name.split('*')[1]} bin")


def render_calibration(bins, t: float, mae: float, path):
    pred = [b.mean_predicted for b in bins if b.valid]
    obs = [b.km_observed for b in bins if b.valid]
    fig, ax = plt.subplots(figsize=(5, 5))
    lim = max(0.01, max(pred + obs) * 1.05) if pred else 1.0
    ax.plot([0, lim], [0, lim], "--", color="gray", lw=1)
    ax.plot(pred, obs, "o-", ms=5)
    ax.set_xlabel(f"mean predicted CIF at t={t:g}")
    ax.set_ylabel("Kaplan-Meier event estimate")
    ax.set_title(f"calibration (MAE {mae:.4f})")
    ax.set_xlim(0, lim)
    ax.set_ylim(0, lim)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
