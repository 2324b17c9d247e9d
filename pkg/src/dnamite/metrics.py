"""Evaluation metrics: time-dependent AUC, IPCW Brier score, concordance
index, calibration curves, and shape-function MAE.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .survstats import DEFAULT_G_FLOOR, StepCurve, km_fit


def td_auc(risk, time, event, ghat: StepCurve, eval_times, floor: float = DEFAULT_G_FLOOR):
    """IPCW cumulative/dynamic AUC at each evaluation time, plus the mean.

    At time t, cases are samples with an observed event by t and controls
    are samples still event-free past t; case i carries weight
    1 / G(Z_i-).  Ties in risk earn half credit.  Times lacking cases or
    controls are reported as NaN and skipped in the mean.
    """
    r = np.asarray(risk, dtype=float)
    z = np.asarray(time, dtype=float)
    d = np.asarray(event, dtype=bool)
    ts = np.asarray(eval_times, dtype=float)
    if r.ndim == 1:
        r = np.tile(r[:, None], (1, ts.size))
    g_left = np.maximum(np.asarray(ghat.left_limit(z), dtype=float), floor)
    per_time = np.full(ts.size, np.nan)
    for k, t in enumerate(ts):
        cases = (z <= t) & d
        controls = z > t
        if not cases.any() or not controls.any():
            continue
        rc = np.sort(r[controls, k])
        ri = r[cases, k]
        less = np.searchsorted(rc, ri, side="left")
        ties = np.searchsorted(rc, ri, side="right") - less
        w = 1.0 / g_left[cases]
        num = (w * (less + 0.5 * ties)).sum()
        per_time[k] = num / (w.sum() * rc.size)
    valid = ~np.isnan(per_time)
    if not valid.any():
        raise ValueError("no evaluation time has both cases and controls")
    return per_time, float(per_time[valid].mean())


def brier_ipcw(cif, time, event, ghat: StepCurve, eval_times, floor: float = DEFAULT_G_FLOOR):
    """IPCW Brier score per evaluation time, plus the mean over times."""
    p = np.asarray(cif, dtype=float)
    z = np.asarray(time, dtype=float)
    d = np.asarray(event, dtype=bool)
    ts = np.asarray(eval_times, dtype=float)
    n = z.size
    g_t = np.maximum(np.asarray(ghat(ts), dtype=float), floor)
    g_left = np.maximum(np.asarray(ghat.left_limit(z), dtype=float), floor)
    surv = (z[:, None] > ts[None, :]) / g_t[None, :]
    obs = ((z[:, None] <= ts[None, :]) & d[:, None]) / g_left[:, None]
    per_time = (surv * p**2 + obs * (1.0 - p) ** 2).sum(axis=0) / n
    return per_time, float(per_time.mean())


def c_index(risk, time, event) -> float:
    """Harrell's concordance over comparable pairs (Z_i < Z_j, event_i).

    Concordant pairs have the earlier event at higher risk; risk ties earn
    half credit.
    """
    r = np.asarray(risk, dtype=float)
    z = np.asarray(time, dtype=float)
    d = np.asarray(event, dtype=bool)
    n = z.size
    concordant = 0.0
    comparable = 0
    chunk = 512
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        comp = (z[sl, None] < z[None, :]) & d[sl, None]
        credit = np.where(
            r[sl, None] > r[None, :], 1.0, np.where(r[sl, None] == r[None, :], 0.5, 0.0)
        )
        concordant += (comp * credit).sum()
        comparable += int(comp.sum())
    if comparable == 0:
        raise ValueError("no comparable pairs")
    return float(concordant / comparable)


@dataclass(frozen=True)
class CalibrationBin:
    mean_predicted: float
    km_observed: float
    count: int
    valid: bool


def calibration_curve(cif_at_t, time, event, t: float, n_bins: int = 10):
    """Equal-count calibration bins of predicted CIF at time t versus the
    within-bin Kaplan-Meier event estimate 1 - KM(t).

    Returns (bins, mae); a bin whose samples are all censored before t has
    no KM information at t, is flagged invalid, and is excluded from the
    MAE.  Bin counts differ by at most one.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    p = np.asarray(cif_at_t, dtype=float)
    z = np.asarray(time, dtype=float)
    d = np.asarray(event, dtype=bool)
    order = np.argsort(p, kind="stable")
    groups = np.array_split(order, n_bins)
    # never split tied predictions across bins: merge across tied boundaries,
    # so identical predictions collapse to a single effective bin
    merged = [groups[0]]
    for g in groups[1:]:
        if g.size and merged[-1].size and p[g[0]] == p[merged[-1][-1]]:
            merged[-1] = np.concatenate([merged[-1], g])
        else:
            merged.append(g)
    bins = []
    errors = []
    for idx in merged:
        if idx.size == 0:
            continue
        zb, db = z[idx], d[idx]
        valid = bool(np.any(zb >= t) or np.any(db))
        observed = float(1.0 - km_fit(zb, db)(t)) if valid else float("nan")
        mean_pred = float(p[idx].mean())
        bins.append(
            CalibrationBin(
                mean_predicted=mean_pred,
                km_observed=observed,
                count=int(idx.size),
                valid=valid,
            )
        )
        if valid:
            errors.append(abs(mean_pred - observed))
    if not errors:
        raise ValueError("no calibration bin permits a KM estimate")
    return bins, float(np.mean(errors))


def shape_mae(learned_values, learned_edges, truth, grid) -> float:
    """Mean absolute error between a piecewise-constant learned shape
    function and a ground-truth function, both centered to grid mean zero.

    ``learned_values`` holds one value per bin; ``learned_edges`` the
    n_bins+1 bin edges.  Grid points are binned (ties to the lower bin)
    and read off the learned curve.
    """
    g = np.asarray(grid, dtype=float)
    if g.size == 0:
        raise ValueError("grid is empty")
    vals = np.asarray(learned_values, dtype=float)
    edges = np.asarray(learned_edges, dtype=float)
    inner = edges[1:-1]
    idx = np.searchsorted(inner, g, side="left")
    learned = vals[idx]
    truth_vals = np.asarray([truth(x) for x in g], dtype=float) if callable(truth) else np.asarray(truth, dtype=float)
    learned = learned - learned.mean()
    truth_vals = truth_vals - truth_vals.mean()
    return float(np.abs(learned - truth_vals).mean())
