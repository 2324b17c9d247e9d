"""Kaplan-Meier estimation, the censoring-survival curve, and the
inverse-probability-of-censoring-weighted (IPCW) squared loss.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

DEFAULT_G_FLOOR = 0.05


@dataclass(frozen=True)
class StepCurve:
    """Right-continuous, nonincreasing survival step function.

    The curve is 1 before the first step time; evaluation at t returns the
    value at the largest step time <= t.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be 1-D and equal length")
        if t.size:
            if not np.all(np.diff(t) > 0):
                raise ValueError("step times must be strictly increasing")
            if np.any(v < 0) or np.any(v > 1):
                raise ValueError("survival values must lie in [0, 1]")
            if np.any(np.diff(v) > 0):
                raise ValueError("survival values must be nonincreasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def _eval(self, t, side: str):
        t = np.asarray(t, dtype=float)
        if self.times.size == 0:
            out = np.ones_like(t)
        else:
            idx = np.searchsorted(self.times, t, side=side) - 1
            out = np.where(idx >= 0, self.values[np.clip(idx, 0, None)], 1.0)
        return out if out.ndim else float(out)

    def __call__(self, t):
        return self._eval(t, "right")

    def left_limit(self, t):
        """Value just before t: the step value at the largest time < t."""
        return self._eval(t, "left")


def km_fit(time, event) -> StepCurve:
    """Product-limit survival estimate over distinct event times.

    At a time carrying both events and censorings, censored samples are
    removed from the at-risk set before the event factor is applied.
    """
    z = np.asarray(time, dtype=float)
    d = np.asarray(event, dtype=bool)
    if z.size == 0:
        raise ValueError("km_fit needs at least one sample")
    order = np.argsort(z, kind="stable")
    zs, ds = z[order], d[order]
    uniq, first = np.unique(zs, return_index=True)
    n = z.size
    events = np.add.reduceat(ds.astype(np.int64), first)
    censored = np.add.reduceat((~ds).astype(np.int64), first)
    at_risk = (n - first) - censored
    has_event = events > 0
    factors = 1.0 - events[has_event] / at_risk[has_event]
    return StepCurve(times=uniq[has_event], values=np.cumprod(factors))


def censor_curve(time, event) -> StepCurve:
    """Censoring-survival curve G(t) = P(C > t): KM with flipped indicator."""
    return km_fit(time, ~np.asarray(event, dtype=bool))


@dataclass(frozen=True)
class IpcwWeights:
    """Precomputed per-sample, per-time IPCW loss weights.

    ``surv[i, k]`` weights the p^2 term (sample still event-free at t_k);
    ``observed[i, k]`` weights the (1-p)^2 term (event observed by t_k).
    ``n_clamped`` counts weight entries whose denominator hit the floor.
    """

    surv: np.ndarray
    observed: np.ndarray
    n_clamped: int

    def take(self, idx) -> "IpcwWeights":
        return IpcwWeights(
            surv=self.surv[idx], observed=self.observed[idx], n_clamped=self.n_clamped
        )


def ipcw_weights(time, event, ghat: StepCurve, eval_times, floor: float = DEFAULT_G_FLOOR) -> IpcwWeights:
    z = np.asarray(time, dtype=float)
    d = np.asarray(event, dtype=bool)
    t = np.asarray(eval_times, dtype=float)
    g_t = np.asarray(ghat(t), dtype=float)
    # left limit so a sample's own censoring event cannot zero its weight
    g_z = np.asarray(ghat.left_limit(z), dtype=float)
    surv_mask = z[:, None] > t[None, :]
    obs_mask = (z[:, None] <= t[None, :]) & d[:, None]
    n_clamped = int((surv_mask & (g_t < floor)[None, :]).sum())
    n_clamped += int((obs_mask & (g_z < floor)[:, None]).sum())
    surv = surv_mask / np.maximum(g_t, floor)[None, :]
    observed = obs_mask / np.maximum(g_z, floor)[:, None]
    return IpcwWeights(surv=surv, observed=observed, n_clamped=n_clamped)


def ipcw_loss(cif, time, event, ghat: StepCurve, eval_times, floor: float = DEFAULT_G_FLOOR) -> float:
    """Mean IPCW squared loss of CIF predictions at the evaluation times.

    Per sample i and time t_k the loss adds p_ik^2 / G(t_k) while the
    sample is event-free (Z_i > t_k) and (1 - p_ik)^2 / G(Z_i-) once an
    observed event has occurred (Z_i <= t_k, event); censored samples
    contribute nothing past their censoring time.  The sum is divided by
    the number of samples.
    """
    p = np.asarray(cif, dtype=float)
    w = ipcw_weights(time, event, ghat, eval_times, floor=floor)
    if w.n_clamped:
        warnings.warn(
            f"censoring survival fell below {floor}; clamped {w.n_clamped} "
            "weight terms (heavy late censoring)",
            stacklevel=2,
        )
    n = p.shape[0]
    return float((w.surv * p**2 + w.observed * (1.0 - p) ** 2).sum() / n)
