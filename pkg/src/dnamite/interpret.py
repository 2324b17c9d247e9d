"""Shape-function export, per-time feature importances, and across-member
confidence intervals for ensembles.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .binning import CATEGORICAL, CONTINUOUS, BinSpec
from .model import DnamiteModel

NAM_GRID_CELLS = 512


@dataclass(frozen=True)
class ShapeCurve:
    """Piecewise-constant shape function export.

    ``values`` has one row per bin (row 0 = missing bin) and one column per
    selected evaluation time; pair curves carry a (bins_a, bins_b, times)
    grid instead.  ``edges`` holds n_bins+1 cut positions for continuous
    features, level labels for categorical ones, and a tuple of the two
    per-feature edge sets for pairs.  Confidence bands are present for
    ensembles (zero width when B = 1).
    """

    source: int | tuple[int, int]
    name: str
    times: np.ndarray
    time_indices: np.ndarray
    values: np.ndarray
    edges: object
    ci_lower: np.ndarray | None = None
    ci_upper: np.ndarray | None = None


def _members(model) -> list[DnamiteModel]:
    return list(model.members) if hasattr(model, "members") else [model]


def _nam_main_curve(model: DnamiteModel, j: int):
    """NAM-mode curves are continuous; export them on a fine virtual grid."""
    spec = model.bin_specs[j]
    if spec.kind == CATEGORICAL:
        scaled = _nam_bin_inputs(spec)
        edges = spec.levels
    else:
        lo = spec.vmin if spec.vmin is not None else 0.0
        hi = spec.vmax if spec.vmax is not None else 1.0
        edges = np.linspace(lo, hi, NAM_GRID_CELLS + 1)
        centers = 0.5 * (edges[:-1] + edges[1:])
        span = hi - lo
        cell = (centers - lo) / span if span > 0 else np.full(centers.shape, 0.5)
        scaled = np.concatenate([[0.5], cell])
    out, _ = model.main_nets[j].forward(scaled[:, None])
    return out - model.main_offsets[j], edges


def _nam_bin_inputs(spec: BinSpec) -> np.ndarray:
    """Representative scaled input per bin (index 0 = missing)."""
    b = spec.n_bins
    if spec.kind == CATEGORICAL:
        body = (np.arange(b)) / (b - 1) if b > 1 else np.full(b, 0.5)
    else:
        edges = spec.edges()
        centers = 0.5 * (edges[:-1] + edges[1:])
        lo, hi = spec.vmin, spec.vmax
        span = (hi - lo) if (lo is not None and hi is not None) else 0.0
        body = (centers - lo) / span if span > 0 else np.full(b, 0.5)
    return np.concatenate([[0.5], np.clip(body, 0.0, 1.0)])


def _main_curve_values(model: DnamiteModel, j: int):
    """(values, edges) for one member; values shape (rows, K)."""
    if model.nam_mode:
        return _nam_main_curve(model, j)
    spec = model.bin_specs[j]
    values = model.main_bin_outputs(j) - model.main_offsets[j]
    edges = spec.levels if spec.kind == CATEGORICAL else spec.edges()
    return values, edges


def _pair_curve_values(model: DnamiteModel, j: int, l: int):
    idx = model.pair_list.index((j, l))
    spec_a, spec_b = model.bin_specs[j], model.bin_specs[l]
    na, nb = spec_a.n_bins + 1, spec_b.n_bins + 1
    if model.nam_mode:
        sa = _nam_bin_inputs(spec_a)
        sb = _nam_bin_inputs(spec_b)
        xa = np.repeat(sa, nb)[:, None]
        xb = np.tile(sb, na)[:, None]
        x = np.hstack([xa, xb])
    else:
        ta, tb = model.pair_tables[idx]
        ea, eb = ta.smoothed(), tb.smoothed()
        x = np.hstack([np.repeat(ea, nb, axis=0), np.tile(eb, (na, 1))])
    out, _ = model.pair_nets[idx].forward(x)
    values = (out - model.pair_offsets[idx]).reshape(na, nb, model.n_times)
    edges_a = spec_a.levels if spec_a.kind == CATEGORICAL else spec_a.edges()
    edges_b = spec_b.levels if spec_b.kind == CATEGORICAL else spec_b.edges()
    return values, (edges_a, edges_b)


def shape_function(model, feature, time_index: int | None = None) -> ShapeCurve:
    """Export one feature's (or pair's) centered shape function.

    ``feature`` is a feature index or a (j, l) pair; ``time_index`` selects
    one evaluation time (None keeps all).  For ensembles the values are the
    across-member mean with 95% t-interval bands; pairs absent from some
    members are averaged over the members that fitted them.
    """
    members = _members(model)
    ref = members[0]
    is_pair = isinstance(feature, tuple)
    if is_pair:
        j, l = feature
        name = f"{ref.feature_names[j]}*{ref.feature_names[l]}"
        stack = []
        edges = None
        for m in members:
            if (j, l) in m.pair_list:
                v, edges = _pair_curve_values(m, j, l)
                stack.append(v)
        if not stack:
            raise ValueError(f"pair ({j}, {l}) not fitted by any member")
    else:
        j = int(feature)
        if not 0 <= j < ref.n_features:
            raise ValueError(f"feature index {j} out of range")
        name = ref.feature_names[j]
        stack = []
        for m in members:
            v, edges = _main_curve_values(m, j)
            stack.append(v)
    arr = np.stack(stack)
    mean = arr.mean(axis=0)
    b = arr.shape[0]
    if b > 1:
        sd = arr.std(axis=0, ddof=1)
        half = stats.t.ppf(0.975, b - 1) * sd / np.sqrt(b)
    else:
        half = np.zeros_like(mean)
    lo, hi = mean - half, mean + half
    indices = np.arange(ref.n_times)
    if time_index is not None:
        if not 0 <= time_index < ref.n_times:
            raise ValueError(f"time index {time_index} out of range")
        sel = [time_index]
        mean, lo, hi = mean[..., sel], lo[..., sel], hi[..., sel]
        indices = np.array(sel)
    return ShapeCurve(
        source=feature,
        name=name,
        times=ref.eval_times[indices],
        time_indices=indices,
        values=mean,
        edges=edges,
        ci_lower=lo,
        ci_upper=hi,
    )


def contribution_matrix(model, data):
    """Per-source centered contributions; ensembles average members.

    Returns (mains, pairs, pair_keys): mains is a list of (n, K) arrays,
    pairs likewise for each key in pair_keys.
    """
    members = _members(model)
    enc = members[0].encode(data)
    b = len(members)
    mains = None
    for m in members:
        cs = [m.main_contribution(j, enc) for j in range(m.n_features)]
        mains = cs if mains is None else [a + c for a, c in zip(mains, cs)]
    mains = [a / b for a in mains]
    pair_keys: list[tuple[int, int]] = []
    for m in members:
        for key in m.pair_list:
            if key not in pair_keys:
                pair_keys.append(key)
    pairs = []
    for key in pair_keys:
        acc = None
        for m in members:
            if key in m.pair_list:
                c = m.pair_contribution(m.pair_list.index(key), enc)
                acc = c if acc is None else acc + c
        pairs.append(acc / b)
    return mains, pairs, pair_keys


def importance_matrix(model, data):
    """Mean absolute contribution per source and time: (p, K) and (q, K)."""
    mains, pairs, _ = contribution_matrix(model, data)
    main_imp = np.stack([np.abs(c).mean(axis=0) for c in mains])
    pair_imp = (
        np.stack([np.abs(c).mean(axis=0) for c in pairs])
        if pairs
        else np.zeros((0, model.n_times))
    )
    return main_imp, pair_imp


def feature_importance(model, data, time_index: int | None = None):
    """Per-feature (and per-pair) importance at one time, or the
    across-time mean when ``time_index`` is None.
    """
    main_imp, pair_imp = importance_matrix(model, data)
    if time_index is None:
        return main_imp.mean(axis=1), pair_imp.mean(axis=1)
    return main_imp[:, time_index], pair_imp[:, time_index]


def importance_from_counts(model):
    """Importances reconstructed from stored training bin occupancy.

    Exact for embedding-mode models (contributions depend only on the bin
    index); NAM-mode values use per-bin representative inputs and are
    approximate.  Ensembles average member importances.
    """
    members = _members(model)
    main_acc = None
    pair_acc: dict[tuple[int, int], np.ndarray] = {}
    pair_keys: list[tuple[int, int]] = []
    for m in members:
        if m.train_bin_counts is None:
            raise ValueError("model carries no training bin counts (not centered)")
        rows = []
        for j in range(m.n_features):
            counts = m.train_bin_counts[j]
            if m.nam_mode:
                x = _nam_bin_inputs(m.bin_specs[j])[:, None]
                out, _ = m.main_nets[j].forward(x)
                values = out - m.main_offsets[j]
            else:
                values = m.main_bin_outputs(j) - m.main_offsets[j]
            rows.append((counts[:, None] * np.abs(values)).sum(axis=0) / counts.sum())
        rows = np.stack(rows)
        main_acc = rows if main_acc is None else main_acc + rows
        for i, key in enumerate(m.pair_list):
            grid, _ = _pair_curve_values(m, *key)
            counts = m.train_pair_counts[i]
            imp = (counts[:, :, None] * np.abs(grid)).sum(axis=(0, 1)) / counts.sum()
            if key not in pair_acc:
                pair_acc[key] = imp.copy()
                pair_keys.append(key)
            else:
                pair_acc[key] += imp
        # pairs missing from a member contribute zero
    b = len(members)
    main_imp = main_acc / b
    pair_imp = (
        np.stack([pair_acc[k] / b for k in pair_keys])
        if pair_keys
        else np.zeros((0, members[0].n_times))
    )
    return main_imp, pair_imp, pair_keys


def _edge_labels(edges, i: int):
    """(lower, upper) labels of non-missing bin i (1-based bin index)."""
    if isinstance(edges, tuple) and edges and isinstance(edges[0], str):
        return edges[i - 1], edges[i - 1]
    return repr(float(edges[i - 1])), repr(float(edges[i]))


def write_shape_csv(curve: ShapeCurve, time_pos: int, path):
    """One CSV per curve and time: bin edges, value, and CI bounds.

    The missing bin is written first with 'missing' edge labels.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        if isinstance(curve.source, tuple):
            ea, eb = curve.edges
            w.writerow(
                ["a_lower", "a_upper", "b_lower", "b_upper", "value", "ci_lower", "ci_upper"]
            )
            na, nb = curve.values.shape[:2]
            for ia in range(na):
                la, ua = ("missing", "missing") if ia == 0 else _edge_labels(ea, ia)
                for ib in range(nb):
                    lb, ub = ("missing", "missing") if ib == 0 else _edge_labels(eb, ib)
                    w.writerow(
                        [
                            la,
                            ua,
                            lb,
                            ub,
                            repr(float(curve.values[ia, ib, time_pos])),
                            repr(float(curve.ci_lower[ia, ib, time_pos])),
                            repr(float(curve.ci_upper[ia, ib, time_pos])),
                        ]
                    )
            return
        w.writerow(["bin_lower", "bin_upper", "value", "ci_lower", "ci_upper"])
        for i in range(curve.values.shape[0]):
            lo, up = ("missing", "missing") if i == 0 else _edge_labels(curve.edges, i)
            w.writerow(
                [
                    lo,
                    up,
                    repr(float(curve.values[i, time_pos])),
                    repr(float(curve.ci_lower[i, time_pos])),
                    repr(float(curve.ci_upper[i, time_pos])),
                ]
            )


def write_importance_csv(model, path, data=None):
    """Importance table: one row per source and time plus a mean row.

    With ``data`` importances are computed on those rows; otherwise they
    come from the stored training bin occupancy.
    """
    ref = _members(model)[0]
    if data is not None:
        main_imp, pair_imp = importance_matrix(model, data)
        _, _, pair_keys = contribution_matrix(model, data)
    else:
        main_imp, pair_imp, pair_keys = importance_from_counts(model)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source", "time_index", "time", "importance"])
        names = list(ref.feature_names)
        rows = [(names[j], main_imp[j]) for j in range(len(names))]
        rows += [
            (f"{names[a]}*{names[b]}", pair_imp[i]) for i, (a, b) in enumerate(pair_keys)
        ]
        for name, imp in rows:
            for k in range(ref.n_times):
                w.writerow([name, k, repr(float(ref.eval_times[k])), repr(float(imp[k]))])
            w.writerow([name, "mean", "", repr(float(imp.mean()))])
