import numpy as np
import pytest

from dnamite.interpret import (
    feature_importance,
    importance_from_counts,
    importance_matrix,
    shape_function,
    write_importance_csv,
    write_shape_csv,
)
from dnamite.synthetic import SyntheticSpec, generate
from dnamite.train import (
    EnsembleModel,
    TrainConfig,
    center_model,
    fit_ensemble,
    fit_main_effects,
)
from dnamite.data import split

from conftest import random_model, random_rows


def centered_model(seed=40, **kw):
    rng = np.random.default_rng(seed)
    model, _, _ = random_model(seed=seed, **kw)
    rows = random_rows(rng, 60, 4)
    center_model(model, rows)
    return model, rows


def test_curve_reconstructs_forward_logits(rng):
    model, rows = centered_model()
    enc = model.encode(rows)
    curves = [shape_function(model, j) for j in range(model.n_features)]
    pair_curves = [shape_function(model, pair) for pair in model.pair_list]
    logits = np.tile(model.intercept, (enc.n, 1))
    for j, curve in enumerate(curves):
        logits += curve.values[enc.bins[:, j]]
    for curve, (a, b) in zip(pair_curves, model.pair_list):
        logits += curve.values[enc.bins[:, a], enc.bins[:, b]]
    direct, _ = model.predict_logits(enc)
    assert np.abs(logits - direct).max() < 1e-10


def test_curve_training_mean_is_zero_after_centering(rng):
    model, rows = centered_model()
    enc = model.encode(rows)
    for j in range(model.n_features):
        curve = shape_function(model, j)
        occupancy = np.bincount(enc.bins[:, j], minlength=curve.values.shape[0])
        weighted = (occupancy[:, None] * curve.values).sum(axis=0) / enc.n
        assert np.abs(weighted).max() < 1e-8


def test_single_model_ci_collapses(rng):
    model, _ = centered_model()
    curve = shape_function(model, 0)
    assert (curve.ci_lower == curve.values).all()
    assert (curve.ci_upper == curve.values).all()


def test_time_index_selection(rng):
    model, _ = centered_model()
    full = shape_function(model, 1)
    one = shape_function(model, 1, time_index=3)
    assert one.values.shape[1] == 1
    assert (one.values[:, 0] == full.values[:, 3]).all()
    with pytest.raises(ValueError):
        shape_function(model, 1, time_index=99)
    with pytest.raises(ValueError):
        shape_function(model, 99)


def test_importance_flat_function_is_zero(rng):
    model, rows = centered_model(pairs=())
    net = model.main_nets[2]
    for w in net.weights:
        w[...] = 0.0
    for b in net.biases:
        b[...] = 0.0
    model.main_offsets[2][...] = 0.0
    mains, _ = feature_importance(model, rows)
    assert mains[2] == 0.0


def test_importance_absolute_mean_rule(rng):
    # contribution +c on half the rows, -c on the other half -> importance |c|
    model, _, _ = random_model(seed=41, p=1, pairs=(), n_bins=2)
    net = model.main_nets[0]
    for w in net.weights:
        w[...] = 0.0
    for b in net.biases:
        b[...] = 0.0
    model.main_offsets[0][...] = 0.0
    # two real bins with outputs +-c via table row sign and a linear net
    c = 0.8
    k = model.n_times
    model.main_tables[0].weights[...] = 0.0
    model.main_tables[0].weights[1, 0] = 1.0
    model.main_tables[0].weights[2, 0] = -1.0
    net.weights[0][0, 0] = 1.0
    net.weights[1][0, 0] = 1.0
    net.weights[2][0, :] = c
    # gamma=0-like: isolate bins by zeroing smoothing via width
    model.main_tables[0].gamma = 0.0
    low = model.bin_specs[0].cut_points[0] - 0.1
    high = model.bin_specs[0].cut_points[0] + 0.1
    rows = [[low]] * 10 + [[high]] * 10
    mains, _ = feature_importance(model, rows)
    contrib = model.main_contribution(0, model.encode(rows))
    assert np.allclose(np.abs(contrib), c)
    assert mains[0] == pytest.approx(c, rel=1e-12)


def test_importance_invariant_to_constant_shift_after_recentering(rng):
    model, rows = centered_model(seed=42)
    mains_before, _ = feature_importance(model, rows)
    model.main_nets[0].biases[-1][...] += 3.0
    center_model(model, rows)
    mains_after, _ = feature_importance(model, rows)
    assert mains_after[0] == pytest.approx(mains_before[0], rel=1e-10)


def test_importance_from_counts_matches_data_importance(rng):
    model, rows = centered_model(seed=43)
    by_data_m, by_data_p = importance_matrix(model, rows)
    by_counts_m, by_counts_p, keys = importance_from_counts(model)
    assert np.allclose(by_counts_m, by_data_m, atol=1e-12)
    assert np.allclose(by_counts_p, by_data_p, atol=1e-12)
    assert keys == model.pair_list


def test_missing_bin_reported_separately(rng):
    model, _ = centered_model(seed=44)
    curve = shape_function(model, 0)
    # row 0 is the missing bin; edges cover the real bins only
    assert curve.values.shape[0] == model.bin_specs[0].n_bins + 1
    assert len(curve.edges) == model.bin_specs[0].n_bins + 1


def test_shape_csv_export_matches_curve(tmp_path, rng):
    model, _ = centered_model(seed=45)
    curve = shape_function(model, 0)
    path = tmp_path / "curve.csv"
    write_shape_csv(curve, 2, path)
    import csv as _csv

    with open(path) as fh:
        rows = list(_csv.reader(fh))
    assert rows[0] == ["bin_lower", "bin_upper", "value", "ci_lower", "ci_upper"]
    assert rows[1][0] == "missing"
    got = np.array([float(r[2]) for r in rows[1:]])
    assert (got == curve.values[:, 2]).all()


def test_importance_csv_written(tmp_path, rng):
    model, rows = centered_model(seed=46)
    write_importance_csv(model, tmp_path / "imp.csv", data=rows)
    text = (tmp_path / "imp.csv").read_text()
    assert "x0" in text and "mean" in text
    write_importance_csv(model, tmp_path / "imp2.csv")
    assert (tmp_path / "imp2.csv").exists()


def fit_small_ensemble(b, seed=0, n=800):
    ds, _ = generate(SyntheticSpec(n=n, seed=seed, weights=(0, 0, 0, 0)))
    cfg = TrainConfig(
        seed=seed,
        ensemble_b=b,
        n_times=6,
        dim=8,
        hidden_dim=16,
        max_epochs=12,
        patience=3,
        batch_size=128,
    )
    return fit_ensemble(ds, cfg), ds


def test_ensemble_ci_width_shrinks_with_members():
    ens3, _ = fit_small_ensemble(3)
    ens10, _ = fit_small_ensemble(10)

    def median_width(ens):
        widths = []
        for j in range(4):
            c = shape_function(ens, j)
            widths.append((c.ci_upper - c.ci_lower)[1:].ravel())
        return np.median(np.concatenate(widths))

    assert median_width(ens10) < median_width(ens3)


def test_ensemble_curve_is_member_mean():
    ens, _ = fit_small_ensemble(3, seed=1)
    curve = shape_function(ens, 2)
    member_vals = np.stack(
        [shape_function(m, 2).values for m in ens.members]
    )
    assert np.allclose(curve.values, member_vals.mean(axis=0), atol=1e-12)
    assert (curve.ci_lower <= curve.values).all()
    assert (curve.ci_upper >= curve.values).all()


def test_noise_feature_ranks_last():
    ds, _ = generate(SyntheticSpec(n=5000, seed=3, weights=(0, 0, 0, 0)))
    cfg = TrainConfig(seed=3, ensemble_b=1)
    sp = split(ds, cfg.val_fraction, cfg.seed)
    m = fit_main_effects(ds, sp, cfg)
    center_model(m, ds.subset(sp.train))
    mains, _ = importance_matrix(m, ds)
    noise_idx = 4
    for k in range(m.n_times):
        signal = np.delete(mains[:, k], noise_idx)
        assert mains[noise_idx, k] < signal.min()
