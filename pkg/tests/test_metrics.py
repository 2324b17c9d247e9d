import numpy as np
import pytest

from dnamite.metrics import (
    brier_ipcw,
    c_index,
    calibration_curve,
    shape_mae,
    td_auc,
)
from dnamite.survstats import StepCurve, censor_curve, ipcw_loss, km_fit

FLAT = StepCurve(times=np.array([]), values=np.array([]))


# ---- independent O(n^2) / direct-sum oracles ----

def td_auc_oracle(risk, z, d, ghat, ts, floor=0.05):
    risk = np.asarray(risk, float)
    per = np.full(len(ts), np.nan)
    g_left = np.maximum(np.asarray(ghat.left_limit(z)), floor)
    for k, t in enumerate(ts):
        num = den_w = 0.0
        n_ctrl = 0
        cases = [i for i in range(len(z)) if z[i] <= t and d[i]]
        controls = [j for j in range(len(z)) if z[j] > t]
        if not cases or not controls:
            continue
        for i in cases:
            w = 1.0 / g_left[i]
            den_w += w
            for j in controls:
                if risk[i, k] > risk[j, k]:
                    num += w
                elif risk[i, k] == risk[j, k]:
                    num += 0.5 * w
        per[k] = num / (den_w * len(controls))
    valid = ~np.isnan(per)
    return per, float(per[valid].mean())


def brier_oracle(cif, z, d, ghat, ts, floor=0.05):
    n = len(z)
    per = np.zeros(len(ts))
    for k, t in enumerate(ts):
        acc = 0.0
        for i in range(n):
            if z[i] <= t and d[i]:
                acc += (1 - cif[i, k]) ** 2 / max(ghat.left_limit(z[i]), floor)
            elif z[i] > t:
                acc += cif[i, k] ** 2 / max(ghat(t), floor)
        per[k] = acc / n
    return per, float(per.mean())


def c_index_oracle(risk, z, d):
    num = den = 0.0
    n = len(z)
    for i in range(n):
        if not d[i]:
            continue
        for j in range(n):
            if z[i] < z[j]:
                den += 1
                if risk[i] > risk[j]:
                    num += 1
                elif risk[i] == risk[j]:
                    num += 0.5
    return num / den


def random_instance(rng, n):
    z = rng.uniform(0.05, 3.0, n)
    d = rng.uniform(size=n) < 0.7
    k = int(rng.integers(2, 6))
    ts = np.sort(rng.uniform(0.2, 2.5, k))
    cif = np.sort(rng.uniform(0.01, 0.99, (n, k)), axis=1)
    ghat = censor_curve(z, d)
    return z, d, ts, cif, ghat


def test_td_auc_perfect_discrimination(rng):
    n = 40
    z = np.sort(rng.uniform(0.1, 2.0, n))
    risk = np.linspace(1, 0, n)  # earlier events get higher risk
    ts = np.quantile(z, [0.25, 0.5, 0.75])
    per, mean = td_auc(risk, z, np.ones(n, bool), FLAT, ts)
    assert np.allclose(per[~np.isnan(per)], 1.0, atol=0)
    assert mean == 1.0


def test_td_auc_constant_risk_half(rng):
    n = 30
    z = rng.uniform(0.1, 2.0, n)
    per, mean = td_auc(np.zeros(n), z, np.ones(n, bool), FLAT, [1.0])
    assert per[0] == 0.5 and mean == 0.5


def test_td_auc_matches_oracle(rng):
    for trial in range(5):
        z, d, ts, cif, ghat = random_instance(rng, 120)
        got, got_mean = td_auc(cif, z, d, ghat, ts)
        want, want_mean = td_auc_oracle(cif, z, d, ghat, ts)
        mask = ~np.isnan(want)
        assert np.allclose(got[mask], want[mask], rtol=0, atol=1e-12)
        assert got_mean == pytest.approx(want_mean, abs=1e-12)


def test_td_auc_invariant_to_monotone_transform(rng):
    z, d, ts, cif, ghat = random_instance(rng, 80)
    a, _ = td_auc(cif, z, d, ghat, ts)
    b, _ = td_auc(np.exp(3 * cif) + 1, z, d, ghat, ts)
    mask = ~np.isnan(a)
    assert np.allclose(a[mask], b[mask], atol=1e-12)


def test_td_auc_all_times_skipped_errors(rng):
    with pytest.raises(ValueError):
        td_auc(np.zeros(3), [1.0, 1.0, 1.0], [True] * 3, FLAT, [5.0])


def test_brier_constant_half_uncensored(rng):
    n = 20
    z = rng.uniform(0.1, 2.0, n)
    per, mean = brier_ipcw(np.full((n, 2), 0.5), z, np.ones(n, bool), FLAT, [0.5, 1.5])
    assert np.allclose(per, 0.25, atol=0) and mean == 0.25


def test_brier_perfect_zero(rng):
    n = 20
    z = rng.uniform(0.1, 2.0, n)
    ts = np.array([0.5, 1.5])
    cif = (z[:, None] <= ts[None, :]).astype(float)
    per, mean = brier_ipcw(cif, z, np.ones(n, bool), FLAT, ts)
    assert (per == 0).all() and mean == 0.0


def test_brier_matches_oracle(rng):
    for trial in range(5):
        z, d, ts, cif, ghat = random_instance(rng, 100)
        got, got_mean = brier_ipcw(cif, z, d, ghat, ts)
        want, want_mean = brier_oracle(cif, z, d, ghat, ts)
        assert np.allclose(got, want, atol=1e-12)
        assert got_mean == pytest.approx(want_mean, abs=1e-12)


def test_brier_sums_to_ipcw_loss(rng):
    z, d, ts, cif, ghat = random_instance(rng, 60)
    per, _ = brier_ipcw(cif, z, d, ghat, ts)
    assert per.sum() == pytest.approx(ipcw_loss(cif, z, d, ghat, ts), rel=1e-12)


def test_c_index_perfect_and_constant(rng):
    n = 25
    z = np.sort(rng.uniform(0.1, 3.0, n))
    risk = np.linspace(1, 0, n)
    assert c_index(risk, z, np.ones(n, bool)) == 1.0
    assert c_index(np.zeros(n), z, np.ones(n, bool)) == 0.5


def test_c_index_matches_oracle(rng):
    for trial in range(5):
        n = 100
        z = rng.uniform(0.05, 3.0, n)
        d = rng.uniform(size=n) < 0.6
        risk = rng.normal(size=n)
        # inject risk ties
        risk[::7] = risk[0]
        assert c_index(risk, z, d) == pytest.approx(c_index_oracle(risk, z, d), abs=1e-15)


def test_c_index_no_comparable_pairs_errors():
    with pytest.raises(ValueError):
        c_index([1.0, 2.0], [1.0, 1.0], [True, True])


def test_calibration_identical_samples(rng):
    n = 50
    z = rng.uniform(0.1, 2.0, n)
    d = np.ones(n, bool)
    p = np.full(n, 0.37)
    t = 1.0
    bins, mae = calibration_curve(p, z, d, t, n_bins=10)
    km_obs = 1.0 - km_fit(z, d)(t)
    assert mae == pytest.approx(abs(0.37 - km_obs), abs=1e-12)
    counts = [b.count for b in bins]
    assert max(counts) - min(counts) <= 1


def test_calibration_on_true_probabilities(rng):
    # predictions equal to the true event probability are calibrated
    n = 10000
    p_true = rng.uniform(0.05, 0.95, n)
    event_early = rng.uniform(size=n) < p_true
    t = 1.0
    z = np.where(event_early, rng.uniform(0, t, n), rng.uniform(t, 2.0, n))
    bins, mae = calibration_curve(p_true, z, np.ones(n, bool), t, n_bins=10)
    assert mae < 0.03


def test_calibration_anticalibrated_predictions(rng):
    n = 10000
    p_true = rng.uniform(0.05, 0.95, n)
    event_early = rng.uniform(size=n) < p_true
    t = 1.0
    z = np.where(event_early, rng.uniform(0, t, n), rng.uniform(t, 2.0, n))
    _, mae = calibration_curve(1.0 - p_true, z, np.ones(n, bool), t, n_bins=10)
    oracle = np.abs(1.0 - 2.0 * p_true).mean()
    assert mae > 0.1
    assert mae == pytest.approx(oracle, abs=0.05)


def test_calibration_flags_all_censored_bins(rng):
    # low-prediction bin entirely censored before t -> flagged, excluded
    z = np.concatenate([np.full(10, 0.2), rng.uniform(1.5, 2.0, 10)])
    d = np.concatenate([np.zeros(10, bool), np.ones(10, bool)])
    p = np.concatenate([np.full(10, 0.1), np.full(10, 0.9)])
    bins, mae = calibration_curve(p, z, d, t=1.0, n_bins=2)
    assert not bins[0].valid and bins[1].valid
    assert mae == pytest.approx(abs(0.9 - bins[1].km_observed), abs=1e-12)


def test_shape_mae_zero_learned_vs_sine():
    # oracle: direct grid computation with the mandated mean-centering
    grid = np.linspace(0.0, 1.0, 512)
    s = np.sin(3 * np.pi * grid)
    oracle = np.abs(s - s.mean()).mean()
    edges = np.array([0.0, 0.5, 1.0])
    got = shape_mae(np.zeros(2), edges, lambda x: np.sin(3 * np.pi * x), grid)
    assert got == pytest.approx(oracle, rel=1e-12)
    assert got == pytest.approx(0.5844, abs=5e-4)


def test_shape_mae_identical_curves_zero(rng):
    edges = np.linspace(0.0, 1.0, 9)
    vals = rng.normal(size=8)
    grid = np.linspace(0.001, 0.999, 200)

    def truth(x):
        return vals[np.searchsorted(edges[1:-1], x, side="left")]

    assert shape_mae(vals, edges, truth, grid) == pytest.approx(0.0, abs=1e-12)


def test_shape_mae_constant_offset_cancels(rng):
    edges = np.linspace(0.0, 1.0, 9)
    vals = rng.normal(size=8)
    grid = np.linspace(0.001, 0.999, 200)

    def truth(x):
        return vals[np.searchsorted(edges[1:-1], x, side="left")] + 7.5

    assert shape_mae(vals, edges, truth, grid) == pytest.approx(0.0, abs=1e-12)


def test_shape_mae_empty_grid_errors():
    with pytest.raises(ValueError):
        shape_mae(np.zeros(2), np.array([0.0, 0.5, 1.0]), lambda x: x, [])
