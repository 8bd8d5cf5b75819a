import numpy as np
import pytest
from scipy import signal

from terrainloc.quarter_car import QuarterCarParams, generate_road, simulate_run
from terrainloc.reconstruction import (
    ReconstructionConfig,
    RoadProfileReconstructor,
    double_integrate_highpass,
    estimate_road_profile,
    highpass_series,
)
from terrainloc.resample import convert_time_to_distance, crop_cells

CUTOFF = 0.5
PERIOD = 1e-3


def test_zero_input_zero_output():
    out = double_integrate_highpass(np.zeros(5000), PERIOD, CUTOFF)
    assert np.all(out == 0.0)


def test_highpass_kills_constants():
    out = highpass_series(np.full(2000, 3.7), PERIOD, CUTOFF)
    assert np.all(out == 0.0)


def test_constant_bias_stays_bounded():
    bias = 0.2
    n = 100_000
    out = double_integrate_highpass(np.full(n, bias), PERIOD, CUTOFF)
    scale = bias / (2.0 * np.pi * CUTOFF) ** 2
    assert np.max(np.abs(out)) < 3.0 * scale
    # unfiltered double integration would reach bias*t^2/2
    unfiltered = 0.5 * bias * (n * PERIOD) ** 2
    assert np.max(np.abs(out)) < 1e-3 * unfiltered


def test_sinusoid_matches_ideal_double_integration():
    f = 10.0 * CUTOFF
    t = np.arange(0, 60.0, PERIOD)
    out = double_integrate_highpass(np.sin(2 * np.pi * f * t), PERIOD, CUTOFF)
    settled = t >= 30.0
    w = 2 * np.pi * f
    measured = 2.0 * np.hypot(
        np.mean(out[settled] * np.cos(w * t[settled])),
        np.mean(out[settled] * np.sin(w * t[settled])),
    )
    assert measured == pytest.approx(1.0 / w**2, rel=0.05)


def test_cutoff_must_be_below_nyquist():
    with pytest.raises(ValueError):
        double_integrate_highpass(np.zeros(100), PERIOD, 600.0)


def test_exact_inverse_with_true_wheel_position(default_params, clean_stream):
    profile = estimate_road_profile(
        clean_stream,
        ReconstructionConfig(params=default_params),
        wheel_position_override=clean_stream.truth.states[:, 2],
    )
    err = np.max(np.abs(profile.height - clean_stream.truth.road_height))
    assert err < 1e-9
    assert profile.transient_until == clean_stream.time[0]


def test_flat_road_reconstructs_to_zero(default_params):
    from terrainloc.quarter_car import RoadInput

    road = RoadInput(np.zeros(300), 1.0)
    stream = simulate_run(road, default_params, 10.0, 15.0, dt=PERIOD)
    profile = estimate_road_profile(stream, ReconstructionConfig(params=default_params))
    assert np.max(np.abs(profile.height)) < 1e-12


def test_scale_equivariance(default_params, class_c_road):
    alpha = 2.5
    scaled = type(class_c_road)(
        heights=alpha * class_c_road.heights,
        spacing=class_c_road.spacing,
        loop=class_c_road.loop,
    )
    cfg = ReconstructionConfig(params=default_params)
    base = estimate_road_profile(
        simulate_run(class_c_road, default_params, 10.0, 20.0, dt=PERIOD), cfg
    )
    big = estimate_road_profile(
        simulate_run(scaled, default_params, 10.0, 20.0, dt=PERIOD), cfg
    )
    scale = np.max(np.abs(base.height)) + 1e-30
    assert np.max(np.abs(big.height - alpha * base.height)) < 1e-9 * alpha * scale


def test_accelerometer_bias_does_not_unbound_the_estimate(
    default_params, class_c_road
):
    stream = simulate_run(class_c_road, default_params, 10.0, 60.0, dt=PERIOD)
    biased = type(stream)(
        time=stream.time,
        wheel_accel=stream.wheel_accel + 0.1,
        shock_disp=stream.shock_disp,
        shock_vel=stream.shock_vel,
        force=stream.force,
        speed=stream.speed,
    )
    cfg = ReconstructionConfig(params=default_params)
    clean = estimate_road_profile(stream, cfg)
    shifted = estimate_road_profile(biased, cfg)
    drift = np.abs(shifted.height - clean.height)
    assert len(drift) >= 50_000
    # bounded offset, no growth across the record
    assert drift.max() < 0.05
    late = drift[len(drift) // 2 :].max()
    assert late <= drift.max() * 1.01


def test_coherence_against_true_road(default_params):
    road = generate_road(2100.0, 0.05, "C", seed=[5, 1])
    stream = simulate_run(road, default_params, 10.0, 200.0, dt=PERIOD)
    profile = estimate_road_profile(
        stream, ReconstructionConfig(params=default_params)
    )
    distance = convert_time_to_distance(profile, 0.1)
    trim = 1000  # filter warm-up: first 100 m at 10 m/s
    distance = crop_cells(distance, trim, len(distance.values) - trim)
    truth = road.height_at(distance.distances())
    freqs, coh = signal.coherence(distance.values, truth, fs=10.0, nperseg=4096)
    band = (freqs >= 0.02) & (freqs <= 1.0)  # wavelengths 1..50 m
    assert coh[band].min() > 0.95


def test_transformer_facade(default_params, clean_stream):
    rec = RoadProfileReconstructor(params=default_params, highpass_cutoff_hz=0.5)
    profile = rec.fit().transform(clean_stream)
    assert len(profile) == len(clean_stream)
    assert profile.transient_until == pytest.approx(10.0)
    assert rec.get_params()["highpass_cutoff_hz"] == 0.5


def test_estimate_requires_uniform_sampling(default_params, clean_stream):
    ragged = type(clean_stream)(
        time=np.concatenate([clean_stream.time[:100], clean_stream.time[150:250]]),
        wheel_accel=clean_stream.wheel_accel[:200],
        shock_disp=clean_stream.shock_disp[:200],
        shock_vel=clean_stream.shock_vel[:200],
        force=clean_stream.force[:200],
        speed=clean_stream.speed[:200],
    )
    with pytest.raises(ValueError):
        estimate_road_profile(ragged, ReconstructionConfig(params=default_params))
