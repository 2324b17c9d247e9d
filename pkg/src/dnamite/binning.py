"""Quantile discretization of continuous features and level indexing of
categorical features.

Bin index 0 is reserved for missing values for every feature; real bins
are numbered 1..n_bins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MISSING_BIN = 0

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class BinSpec:
    """Per-feature discretization map.

    For continuous features, ``cut_points`` holds ``n_bins - 1`` strictly
    increasing thresholds; a value lands in the lowest bin whose cut point
    is >= the value (ties go to the lower bin).  ``vmin``/``vmax`` record
    the observed data range for reporting bin edges.

    For categorical features, ``levels`` holds the unique levels in order
    of first appearance; unseen levels at inference map to the missing bin.
    """

    kind: str
    n_bins: int
    cut_points: tuple[float, ...] = ()
    levels: tuple[str, ...] = ()
    vmin: float | None = None
    vmax: float | None = None

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise ValueError(f"unknown bin kind {self.kind!r}")
        if self.n_bins < 1:
            raise ValueError("n_bins must be >= 1")
        if self.kind == CONTINUOUS:
            cuts = np.asarray(self.cut_points, dtype=float)
            if cuts.size != self.n_bins - 1:
                raise ValueError("cut_points must have length n_bins - 1")
            if cuts.size and not np.all(np.diff(cuts) > 0):
                raise ValueError("cut_points must be strictly increasing")
        else:
            if len(self.levels) != self.n_bins:
                raise ValueError("levels must have length n_bins")
            if len(set(self.levels)) != len(self.levels):
                raise ValueError("categorical levels must be unique")

    def edges(self) -> np.ndarray:
        """Bin edges for reporting: (n_bins + 1,) array, continuous only."""
        if self.kind != CONTINUOUS:
            raise ValueError("edges are defined for continuous specs only")
        lo = self.vmin if self.vmin is not None else -np.inf
        hi = self.vmax if self.vmax is not None else np.inf
        return np.concatenate([[lo], np.asarray(self.cut_points, dtype=float), [hi]])


def fit_bins(values, max_bins: int) -> BinSpec:
    """Fit quantile cut points over the non-missing entries of ``values``.

    Cut points are the empirical quantiles at i/max_bins for
    i = 1..max_bins-1, linear interpolation between order statistics.
    Duplicate cut points (and cut points at the observed maximum, which
    would leave an empty top bin) are dropped, so the fitted bin count may
    be smaller than ``max_bins``.
    """
    if max_bins < 2:
        raise ValueError("max_bins must be >= 2")
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        raise ValueError("cannot fit bins: all values missing")
    qs = np.arange(1, max_bins) / max_bins
    cuts = np.unique(np.quantile(arr, qs, method="linear"))
    cuts = cuts[cuts < arr.max()]
    return BinSpec(
        kind=CONTINUOUS,
        n_bins=cuts.size + 1,
        cut_points=tuple(float(c) for c in cuts),
        vmin=float(arr.min()),
        vmax=float(arr.max()),
    )


def fit_levels(values) -> BinSpec:
    """Index categorical levels by first appearance, skipping missing."""
    levels: list[str] = []
    seen = set()
    n_present = 0
    for v in values:
        if _is_missing(v):
            continue
        n_present += 1
        s = str(v)
        if s not in seen:
            seen.add(s)
            levels.append(s)
    if n_present == 0:
        raise ValueError("cannot fit levels: all values missing")
    return BinSpec(kind=CATEGORICAL, n_bins=len(levels), levels=tuple(levels))


def _is_missing(v) -> bool:
    if v is None:
        return True
    if isinstance(v, float) and np.isnan(v):
        return True
    return False


def apply_bins(value, spec: BinSpec) -> int:
    """Map one raw value to its bin index (0 = missing)."""
    if _is_missing(value):
        return MISSING_BIN
    if spec.kind == CONTINUOUS:
        v = float(value)
        if np.isnan(v):
            return MISSING_BIN
        cuts = np.asarray(spec.cut_points, dtype=float)
        # values equal to a cut point fall in the lower bin
        return int(np.searchsorted(cuts, v, side="left")) + 1
    pos = _level_index(spec)
    return pos.get(str(value), MISSING_BIN)


def apply_bins_array(values, spec: BinSpec) -> np.ndarray:
    """Vectorized :func:`apply_bins` over a column of raw values."""
    if spec.kind == CONTINUOUS:
        arr = np.asarray(values, dtype=float)
        bins = np.zeros(arr.shape, dtype=np.int64)
        ok = np.isfinite(arr)
        cuts = np.asarray(spec.cut_points, dtype=float)
        bins[ok] = np.searchsorted(cuts, arr[ok], side="left") + 1
        return bins
    pos = _level_index(spec)
    return np.array(
        [MISSING_BIN if _is_missing(v) else pos.get(str(v), MISSING_BIN) for v in values],
        dtype=np.int64,
    )


def _level_index(spec: BinSpec) -> dict[str, int]:
    return {lvl: i + 1 for i, lvl in enumerate(spec.levels)}
