"""Metric tests: naive loop oracles, hand-computed SNR values, baseline
filter properties, binning invariants, and the end-to-end evaluator."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gnssdenoise import metrics as mx


def rng_windows(seed, n=4, stations=3, days=10, comps=2):
    rng = np.random.default_rng(seed)
    return (rng.normal(size=(n, stations, days, comps)),
            rng.normal(size=(n, stations, days, comps)))


# ---------------------------------------------------------------------------
# error sums


def test_sample_metrics_identity_and_single_cell():
    d = np.random.default_rng(0).normal(size=(3, 8, 2))
    out = mx.sample_metrics(d, d)
    assert out == {"se": 0.0, "ae": 0.0}
    d_hat = d.copy()
    d_hat[1, 4, 0] += -3.5
    out = mx.sample_metrics(d, d_hat)
    assert out["se"] == pytest.approx(12.25, abs=1e-12)
    assert out["ae"] == pytest.approx(3.5, abs=1e-12)


def test_sample_metrics_matches_triple_loop():
    rng = np.random.default_rng(1)
    d = rng.normal(size=(4, 7, 2))
    d_hat = rng.normal(size=(4, 7, 2))
    out = mx.sample_metrics(d, d_hat)
    se = ae = 0.0
    for j in range(4):
        for t in range(7):
            for c in range(2):
                diff = d[j, t, c] - d_hat[j, t, c]
                se += diff ** 2
                ae += abs(diff)
    assert abs(out["se"] - se) <= 1e-12 * max(1.0, se)
    assert abs(out["ae"] - ae) <= 1e-12 * max(1.0, ae)


def test_sample_metrics_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        mx.sample_metrics(np.zeros((2, 3, 2)), np.zeros((2, 4, 2)))


def test_aggregate_identical_values_and_hand_case():
    agg = mx.aggregate_metrics([4.0, 4.0, 4.0], [1.0, 1.0, 1.0])
    assert agg["mse"] == 4.0 and agg["sigma_se"] == 0.0
    assert agg["mae"] == 1.0 and agg["sigma_ae"] == 0.0
    agg = mx.aggregate_metrics([0.0, 2.0], [0.0, 2.0])
    assert agg["mse"] == 1.0 and agg["sigma_se"] == 1.0


def test_aggregate_population_std_and_empty():
    values = np.array([1.0, 5.0, 9.0])
    agg = mx.aggregate_metrics(values, values)
    assert agg["sigma_se"] == pytest.approx(float(values.std(ddof=0)))
    with pytest.raises(ValueError, match="at least one"):
        mx.aggregate_metrics([], [])


# ---------------------------------------------------------------------------
# SNR


def test_average_snr_equal_powers_exactly_zero():
    rng = np.random.default_rng(2)
    noise = rng.normal(size=(3, 12, 2)) + 0.1
    clean = -2.0 * noise          # observed = clean + noise = -noise
    assert mx.average_snr(clean, noise) == 0.0


def test_average_snr_hand_case():
    clean = np.array([1.0, 0.0]).reshape(1, 2, 1)
    noise = np.array([1.0, 0.0]).reshape(1, 2, 1)
    # observed [2, 0]: power 4 over noise power 1
    assert mx.average_snr(clean, noise) == pytest.approx(
        10.0 * np.log10(4.0), abs=1e-12)


def test_average_snr_excludes_negative_samples():
    noise = np.random.default_rng(3).normal(size=(4, 10, 2))
    assert mx.average_snr(np.zeros((4, 10, 2)), noise) is None


def test_average_snr_requires_all_components():
    # displacement on one component only -> station not counted
    clean = np.zeros((2, 6, 2))
    clean[0, :, 0] = 1.0
    noise = np.ones((2, 6, 2))
    assert mx.average_snr(clean, noise) is None
    clean[0, :, 1] = 2.0
    assert mx.average_snr(clean, noise) is not None


def test_average_snr_zero_noise_power_rejected():
    clean = np.ones((1, 4, 2))
    noise = np.zeros((1, 4, 2))
    with pytest.raises(ValueError, match="noise power"):
        mx.average_snr(clean, noise)


def test_average_snr_matches_loop_oracle():
    rng = np.random.default_rng(4)
    clean = rng.normal(size=(5, 9, 2))
    noise = rng.normal(size=(5, 9, 2))
    got = mx.average_snr(clean, noise)
    vals = []
    for j in range(5):
        if all(np.abs(clean[j, :, c]).max() > 0 for c in range(2)):
            for c in range(2):
                xi = clean[j, :, c] + noise[j, :, c]
                vals.append(10 * np.log10((xi ** 2).sum()
                                          / (noise[j, :, c] ** 2).sum()))
    assert got == pytest.approx(np.mean(vals), abs=1e-12)


# ---------------------------------------------------------------------------
# relative denoising error


def test_denoising_error_perfect_estimate_is_zero():
    rng = np.random.default_rng(5)
    clean = rng.normal(size=(3, 8, 2)) + 0.5
    assert mx.denoising_error(clean, clean) == 0.0


def test_denoising_error_zero_estimate_shape_factor():
    clean = np.zeros((1, 4, 2))
    clean[0, :, 0] = [1.0, 2.0, 4.0, 2.0]
    clean[0, :, 1] = [2.0, 2.0, 2.0, 2.0]
    expected = ((1 + 2 + 4 + 2) / 4.0 + (2 + 2 + 2 + 2) / 2.0) / (4 * 1 * 2)
    got = mx.denoising_error(clean, np.zeros_like(clean))
    assert got == pytest.approx(expected, abs=1e-12)


def test_denoising_error_matches_loop_oracle():
    rng = np.random.default_rng(6)
    clean = rng.normal(size=(4, 6, 2)) + 0.3
    d_hat = rng.normal(size=(4, 6, 2))
    keep = [j for j in range(4)
            if all(np.abs(clean[j, :, c]).max() > 0 for c in range(2))]
    total = 0.0
    for j in keep:
        for c in range(2):
            peak = np.abs(clean[j, :, c]).max()
            total += sum(abs(clean[j, t, c] - d_hat[j, t, c])
                         for t in range(6)) / peak
    expected = total / (6 * len(keep) * 2)
    assert mx.denoising_error(clean, d_hat) == pytest.approx(expected,
                                                             abs=1e-12)


@given(st.floats(min_value=1e-6, max_value=1e6))
@settings(max_examples=30, deadline=None)
def test_denoising_error_scale_invariance(c):
    rng = np.random.default_rng(7)
    clean = rng.normal(size=(3, 8, 2)) + 0.4
    d_hat = rng.normal(size=(3, 8, 2))
    base = mx.denoising_error(clean, d_hat)
    scaled = mx.denoising_error(c * clean, c * d_hat)
    assert scaled == pytest.approx(base, rel=1e-12)


def test_denoising_error_requires_recording_station():
    with pytest.raises(ValueError, match="no station"):
        mx.denoising_error(np.zeros((2, 5, 2)), np.zeros((2, 5, 2)))


# ---------------------------------------------------------------------------
# baselines


def test_baseline_constant_series_unchanged():
    x = np.full((2, 3, 11, 2), 2.5)
    for kind in mx.BASELINE_KINDS:
        for k in mx.BASELINE_WIDTHS:
            np.testing.assert_array_equal(mx.baseline_filter(x, kind, k), x)


def test_baseline_median_removes_single_spike():
    x = np.zeros((1, 1, 9, 2))
    x[0, 0, 4, :] = 100.0
    out = mx.baseline_filter(x, "median", 3)
    assert np.all(out == 0.0)


def test_baseline_mean_preserves_linear_ramp_interior():
    t = np.arange(21, dtype=np.float64)
    x = np.stack([2.0 * t + 1.0, -0.5 * t], axis=-1)[None]
    out = mx.baseline_filter(x, "mean", 7)
    np.testing.assert_allclose(out[0, 3:-3], x[0, 3:-3], rtol=1e-12)


def test_baseline_gaps_excluded_from_windows():
    x = np.array([1.0, np.nan, 3.0]).reshape(1, 3, 1)
    out = mx.baseline_filter(x, "mean", 3)
    assert out[0, 1, 0] == pytest.approx(2.0)
    assert np.isfinite(out).all()


def test_baseline_all_gap_window_gives_zero():
    x = np.full((1, 5, 1), np.nan)
    out = mx.baseline_filter(x, "median", 3)
    assert np.all(out == 0.0)


def test_baseline_median_order_preserving_on_monotone():
    x = np.sort(np.random.default_rng(8).normal(size=(1, 15, 1)), axis=1)
    out = mx.baseline_filter(x, "median", 5)
    assert np.all(np.diff(out[0, :, 0]) >= 0)


def test_baseline_edge_windows_shrink():
    t = np.arange(7, dtype=np.float64)
    x = t.reshape(1, 7, 1)
    out = mx.baseline_filter(x, "mean", 5)
    # first day: mean of days 0..2 (window clipped to the left)
    assert out[0, 0, 0] == pytest.approx(1.0)
    assert out[0, -1, 0] == pytest.approx(5.0)


def test_baseline_validation():
    x = np.zeros((1, 5, 2))
    with pytest.raises(ValueError, match="kind"):
        mx.baseline_filter(x, "mode", 3)
    with pytest.raises(ValueError, match="odd"):
        mx.baseline_filter(x, "mean", 4)


def test_make_baseline_names():
    assert mx.make_baseline("median", 15).__name__ == "moving_med_15"
    assert mx.make_baseline("mean", 3).__name__ == "moving_avg_3"


# ---------------------------------------------------------------------------
# binning and evaluation


def test_snr_binning_populations_and_edges():
    snr = np.array([0.2, 0.7, 1.3, 5.6, np.nan])
    err = np.array([1.0, 3.0, 2.0, 4.0, 9.0])
    lows, highs, mean_err, count = mx.snr_binning(snr, err, width_db=1.0)
    assert np.all(np.diff(lows) > 0)
    assert np.all(highs > lows)
    assert count.sum() == 4          # NaN excluded
    assert (count > 0).all()         # empty bins dropped
    assert mean_err[0] == pytest.approx(2.0)   # bin [0,1): 1.0 and 3.0
    assert lows[0] == 0.0 and highs[-1] == 6.0


def test_snr_binning_all_excluded():
    lows, highs, mean_err, count = mx.snr_binning(
        np.array([np.nan]), np.array([np.nan]))
    assert len(lows) == len(highs) == len(mean_err) == len(count) == 0


def test_evaluate_perfect_oracle_is_zero():
    clean, noise = rng_windows(9)
    clean[:, :, :, :] += 0.2
    report = mx.evaluate_predictions("oracle", clean, noise, clean)
    assert report.mse == 0.0 and report.mae == 0.0
    assert report.sigma_se == 0.0 and report.sigma_ae == 0.0
    assert report.mean_rel_error == 0.0
    assert report.bin_count.sum() == clean.shape[0]


def test_evaluate_baseline_positive_error_and_invariants():
    rng = np.random.default_rng(10)
    clean = rng.normal(size=(5, 3, 20, 2))
    noise = rng.normal(size=(5, 3, 20, 2))
    estimates = mx.baseline_filter(clean + noise, "median", 3)
    report = mx.evaluate_predictions("moving_med_3", clean, noise, estimates)
    assert report.mse > 0 and report.mae > 0
    assert report.sigma_se >= 0 and report.sigma_ae >= 0
    included = int(np.isfinite(report.rel_error).sum())
    assert report.bin_count.sum() == included


def test_evaluate_excludes_negative_samples_from_bins():
    rng = np.random.default_rng(11)
    clean = rng.normal(size=(4, 3, 10, 2)) + 0.3
    clean[0] = 0.0                      # negative sample
    noise = rng.normal(size=(4, 3, 10, 2))
    report = mx.evaluate_predictions("m", clean, noise, np.zeros_like(clean))
    assert np.isnan(report.snr_db[0]) and np.isnan(report.rel_error[0])
    assert report.bin_count.sum() == 3


def test_report_io_round_trip(tmp_path):
    clean, noise = rng_windows(12)
    clean += 0.2
    report = mx.evaluate_predictions("demo", clean, noise,
                                     np.zeros_like(clean))
    jpath = tmp_path / "report.json"
    cpath = tmp_path / "curve.csv"
    mx.write_report(report, str(jpath))
    mx.write_snr_curve(report, str(cpath))
    import json
    data = json.loads(jpath.read_text())
    assert data["model_id"] == "demo"
    assert len(data["bins"]) == len(report.bin_count)
    lines = cpath.read_text().strip().splitlines()
    assert lines[0] == "bin_center_db,mean_error,count"
    assert len(lines) == 1 + len(report.bin_count)
    text = mx.format_report_rows([report])
    assert "demo" in text and "MSE" in text
