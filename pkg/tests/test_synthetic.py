"""Generator tests: logistic ramp identities, source sampling bounds,
window assembly, dataset round trips, reproducibility."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnssdenoise.noise import SpatialNoiseModel, synthesize_residuals
from gnssdenoise.synthetic import (Dataset, SlabBand, WindowSample,
                                   assemble_window, generate_dataset,
                                   logistic_ramp, make_demo_network,
                                   ramp_rate_coefficient, read_dataset,
                                   read_stations, sample_sources,
                                   write_dataset)


def fitted_model(network, seed=0, span=500):
    res = synthesize_residuals(network, span_days=span,
                               rng=np.random.default_rng(seed))
    return SpatialNoiseModel().fit(res)


def test_ramp_rate_reference_value():
    # T=20, gamma=0.01: (2/20) ln 99
    assert ramp_rate_coefficient(20.0, 0.01) == pytest.approx(
        0.1 * np.log(99.0), rel=1e-15)
    assert ramp_rate_coefficient(20.0, 0.01) == pytest.approx(0.45951, abs=1e-5)


def test_ramp_midpoint_is_half_amplitude_exactly():
    D = np.array([[4.0, -2.0]])
    ramp = logistic_ramp(D, t0_days=30.0, duration_days=20.0)
    np.testing.assert_array_equal(ramp[0, 30], D[0] / 2.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(5, 50), st.floats(10, 30))
def test_ramp_endpoint_identities(D_val, t0, T):
    D = np.array([[D_val, 0.5 * D_val]])
    gamma = 0.01
    t_grid = np.array([t0, t0 + T / 2.0, t0 - T / 2.0])
    beta = ramp_rate_coefficient(T, gamma)
    d = D[:, None, :] / (1.0 + np.exp(-beta * (t_grid - t0)))[None, :, None]
    scale = abs(D_val) + 1e-30
    assert abs(d[0, 0, 0] - D_val / 2.0) < 1e-9 * scale
    assert abs(d[0, 1, 0] - (1.0 - gamma) * D_val) < 1e-9 * scale
    assert abs(d[0, 2, 0] - gamma * D_val) < 1e-9 * scale


def test_ramp_endpoints_on_integer_grid():
    # same identity via the public API, t0 and t0+T/2 on grid points
    D = np.array([[10.0, -3.0], [0.5, 2.0]])
    ramp = logistic_ramp(D, t0_days=20.0, duration_days=24.0)
    np.testing.assert_allclose(ramp[:, 20, :], D / 2.0, rtol=0, atol=0)
    np.testing.assert_allclose(ramp[:, 32, :], 0.99 * D, rtol=1e-12)


def test_sample_sources_event_count_distribution():
    rng = np.random.default_rng(0)
    slab = SlabBand()
    counts = np.zeros(4)
    for _ in range(10_000):
        counts[len(sample_sources(slab, rng))] += 1
    np.testing.assert_allclose(counts / 10_000, 0.25, atol=0.02)


def test_sample_sources_parameter_bounds():
    rng = np.random.default_rng(1)
    slab = SlabBand()
    sources = []
    for _ in range(2000):
        sources.extend(sample_sources(slab, rng))
    depths = np.array([s.depth_km for s in sources])
    rakes = np.array([s.rake_deg for s in sources])
    durations = np.array([s.duration_days for s in sources])
    t0s = np.array([s.t0_days for s in sources])
    mags = np.array([s.moment_magnitude for s in sources])
    assert depths.min() >= 10.0 and depths.max() <= 50.0
    assert rakes.min() >= 80.0 and rakes.max() <= 100.0
    assert durations.min() >= 10.0 and durations.max() <= 30.0
    assert t0s.min() >= 0.0 and t0s.max() <= 60.0
    assert mags.min() >= 6.0 - 1e-9 and mags.max() <= 7.0 + 1e-9
    assert all(s.strike_deg == slab.strike_deg and s.dip_deg == slab.dip_deg
               for s in sources)
    # across-strike position tracks the nominal depth over the band
    assert depths.std() > 5.0


def test_assemble_zero_sources_is_pure_noise():
    net = make_demo_network(5, seed=2)
    noise = np.random.default_rng(3).normal(size=(5, 60, 2))
    mask = np.zeros((5, 60), dtype=bool)
    w = assemble_window(noise.copy(), [], net, mask)
    np.testing.assert_array_equal(w.clean, 0.0)
    np.testing.assert_array_equal(w.observed, noise)
    assert w.n_events == 0


def test_assemble_duplicate_source_doubles_signal():
    net = make_demo_network(5, seed=4)
    slab = SlabBand()
    rng = np.random.default_rng(5)
    src = sample_sources(slab, rng, n_events=1)[0]
    noise = np.zeros((5, 60, 2))
    mask = np.zeros((5, 60), dtype=bool)
    one = assemble_window(noise.copy(), [src], net, mask)
    two = assemble_window(noise.copy(), [src, src], net, mask)
    np.testing.assert_array_equal(two.clean, 2.0 * one.clean)
    assert np.abs(one.clean).max() > 0


def test_assemble_applies_gap_sentinel():
    net = make_demo_network(3, seed=6)
    noise = np.ones((3, 60, 2))
    mask = np.zeros((3, 60), dtype=bool)
    mask[1, 10:15] = True
    w = assemble_window(noise, [], net, mask)
    assert np.isnan(w.observed[1, 10:15]).all()
    assert np.isfinite(w.observed[~mask]).all()
    # additive model holds exactly off the gaps
    diff = w.observed - (w.noise + w.clean)
    assert np.nanmax(np.abs(diff[~mask])) == 0.0


def test_generate_dataset_shapes_splits_and_determinism():
    net = make_demo_network(4, seed=7)
    model = fitted_model(net, seed=8)
    ds1 = generate_dataset(net, model, n_samples=30, seed=123)
    ds2 = generate_dataset(net, model, n_samples=30, seed=123)
    assert ds1.noise.shape == (30, 4, 60, 2)
    np.testing.assert_array_equal(ds1.observed, ds2.observed)
    np.testing.assert_array_equal(ds1.mask, ds2.mask)
    assert ds1.manifest["n_events"] == ds2.manifest["n_events"]
    lo, hi = ds1.manifest["splits"]["train"]
    assert (lo, hi) == (0, 24)
    assert ds1.manifest["splits"]["val"] == [24, 27]
    assert ds1.manifest["splits"]["test"] == [27, 30]
    assert len(ds1.manifest["n_events"]) == 30
    # additive model on unmasked entries, float32-rounded storage
    gap = ds1.mask.astype(bool)
    direct = (ds1.noise + ds1.clean)[~gap]
    assert np.array_equal(ds1.observed[~gap], direct)


def test_dataset_round_trip_and_corruption(tmp_path):
    net = make_demo_network(3, seed=9)
    model = fitted_model(net, seed=10)
    ds = generate_dataset(net, model, n_samples=10, seed=77)
    out = tmp_path / "ds"
    write_dataset(ds, out, network=net)
    back = read_dataset(out)
    for role in ("noise", "clean", "observed", "mask"):
        np.testing.assert_array_equal(getattr(back, role), getattr(ds, role))
    assert back.manifest == ds.manifest
    assert read_stations(out).ids == net.ids

    # truncate one blob: the reader must name the breakage point
    blob = out / "clean.bin"
    data = blob.read_bytes()
    blob.write_bytes(data[:-10])
    with pytest.raises(ValueError, match="sample"):
        read_dataset(out)


def test_negative_samples_have_zero_clean_signal():
    net = make_demo_network(4, seed=11)
    model = fitted_model(net, seed=12)
    ds = generate_dataset(net, model, n_samples=40, seed=5)
    events = ds.n_events()
    assert (events == 0).any()
    for i in np.flatnonzero(events == 0):
        np.testing.assert_array_equal(ds.clean[i], 0.0)
    for i in np.flatnonzero(events > 0):
        assert np.abs(ds.clean[i]).max() > 0
