import numpy as np
import pytest

from terrainloc.quarter_car import (
    InsufficientExcitationError,
    NoiseConfig,
    QuarterCarIdentifier,
    QuarterCarParams,
    QuarterCarState,
    RoadInput,
    RoadTooShortError,
    generate_road,
    identify_parameters,
    simulate_run,
    step_dynamics,
)


def test_params_validation():
    with pytest.raises(ValueError):
        QuarterCarParams(body_mass=-1.0)
    with pytest.raises(ValueError):
        QuarterCarParams(spring_rate=0.0)
    QuarterCarParams(damping_coefficient=0.0)  # zero damping is allowed


def test_zero_state_is_equilibrium(default_params):
    state = QuarterCarState()
    out = step_dynamics(state, default_params, 0.0, 0.0, 1e-3)
    assert out == QuarterCarState(0.0, 0.0, 0.0, 0.0)


def test_step_rejects_bad_dt(default_params):
    with pytest.raises(ValueError):
        step_dynamics(QuarterCarState(), default_params, 0.0, 0.0, 0.02)
    with pytest.raises(ValueError):
        step_dynamics(QuarterCarState(), default_params, 0.0, 0.0, 0.0)


def test_constant_road_settles_to_offset(default_params):
    h = 0.05
    road = RoadInput(np.full(500, h), 1.0)
    stream = simulate_run(road, default_params, 5.0, 20.0, dt=1e-3)
    x = stream.truth.states[-1]
    assert abs(x[0] - h) < 1e-6
    assert abs(x[2] - h) < 1e-6
    assert abs(x[1]) < 1e-6 and abs(x[3]) < 1e-6


def test_sinusoid_body_amplitude_matches_transfer_function(default_params):
    # oracle: |C (jwI - A)^-1 B| from the continuous-time state matrices
    amp, f_hz, v = 0.02, 2.0, 10.0
    wavelength = v / f_hz
    x = np.arange(0.0, 40.0 * v + 10.0, 0.01)
    road = RoadInput(amp * np.sin(2.0 * np.pi * x / wavelength), 0.01)
    stream = simulate_run(road, default_params, v, 40.0, dt=1e-3)

    t = stream.time
    body = stream.truth.states[:, 0]
    settled = t >= 20.0
    w = 2.0 * np.pi * f_hz
    measured = 2.0 * np.hypot(
        np.mean(body[settled] * np.cos(w * t[settled])),
        np.mean(body[settled] * np.sin(w * t[settled])),
    )
    response = np.linalg.solve(
        1j * w * np.eye(4) - default_params.state_matrix(),
        default_params.input_matrix()[:, 0],
    )
    predicted = abs(response[0]) * amp
    assert measured == pytest.approx(predicted, rel=0.02)


def test_rk4_order_richardson(default_params):
    def final_state(dt, total=0.2):
        state = QuarterCarState(0.01, 0.0, 0.005, 0.0)
        for _ in range(int(round(total / dt))):
            state = step_dynamics(state, default_params, 0.0, 0.0, dt)
        return state.as_array()

    coarse = final_state(2e-3)
    mid = final_state(1e-3)
    fine = final_state(5e-4)
    ratio = np.linalg.norm(coarse - mid) / np.linalg.norm(mid - fine)
    assert 16.0 * 0.7 <= ratio <= 16.0 * 1.3


def test_flat_road_gives_silent_stream(default_params):
    road = RoadInput(np.zeros(200), 1.0)
    stream = simulate_run(road, default_params, 5.0, 10.0, dt=1e-3)
    assert np.all(stream.wheel_accel == 0.0)
    assert np.all(stream.shock_disp == 0.0)
    assert np.all(stream.shock_vel == 0.0)


def test_simulate_is_deterministic(default_params, class_c_road):
    noise = NoiseConfig(accel_std=0.05, shock_disp_std=1e-4)
    a = simulate_run(class_c_road, default_params, 10.0, 5.0, noise=noise, seed=42)
    b = simulate_run(class_c_road, default_params, 10.0, 5.0, noise=noise, seed=42)
    assert np.array_equal(a.wheel_accel, b.wheel_accel)
    assert np.array_equal(a.shock_disp, b.shock_disp)


def test_noise_variance_matches_config(default_params, class_c_road):
    sigma = 0.05
    clean = simulate_run(class_c_road, default_params, 10.0, 30.0, dt=1e-3)
    noisy = simulate_run(
        class_c_road,
        default_params,
        10.0,
        30.0,
        dt=1e-3,
        noise=NoiseConfig(accel_std=sigma),
        seed=9,
    )
    delta = noisy.wheel_accel - clean.wheel_accel
    assert len(delta) >= 10_000
    assert np.var(delta) == pytest.approx(sigma**2, rel=0.10)


def test_road_too_short_raises(default_params):
    road = RoadInput(np.zeros(100), 0.5)  # 49.5 m
    with pytest.raises(RoadTooShortError):
        simulate_run(road, default_params, 10.0, 10.0, dt=1e-3)


def test_energy_non_increasing_after_bump(default_params):
    # half-sine bump between 5 m and 10 m, flat afterwards
    x = np.arange(0.0, 100.0, 0.05)
    heights = np.where(
        (x >= 5.0) & (x <= 10.0), 0.03 * np.sin(np.pi * (x - 5.0) / 5.0), 0.0
    )
    road = RoadInput(heights, 0.05)
    p = default_params
    stream = simulate_run(road, p, 10.0, 8.0, dt=1e-3)
    states = stream.truth.states
    after = stream.time > 1.5  # bump fully passed, road flat again
    x1, x2, x3, x4 = (states[after, i] for i in range(4))
    energy = (
        0.5 * p.body_mass * x2**2
        + 0.5 * p.wheel_mass * x4**2
        + 0.5 * p.spring_rate * (x1 - x3) ** 2
        + 0.5 * p.tire_rate * x3**2
    )
    growth = np.diff(energy)
    assert np.all(growth <= 1e-6 * energy[:-1] + 1e-15)


class TestGenerateRoad:
    def test_sample_count(self):
        road = generate_road(1000.0, 0.1, "C", seed=1)
        assert len(road.heights) == 10_000

    def test_zero_mean(self):
        road = generate_road(500.0, 0.1, "B", seed=2)
        assert abs(road.heights.mean()) < 1e-12

    def test_class_scaling_monotone(self):
        rms_a = np.std(generate_road(1000.0, 0.1, "A", seed=3).heights)
        rms_d = np.std(generate_road(1000.0, 0.1, "D", seed=3).heights)
        assert rms_d > rms_a

    def test_reproducible(self):
        a = generate_road(300.0, 0.1, "C", seed=11)
        b = generate_road(300.0, 0.1, "C", seed=11)
        assert np.array_equal(a.heights, b.heights)

    def test_psd_slope_near_inverse_square(self):
        from scipy import signal

        road = generate_road(4000.0, 0.05, "C", seed=4)
        freqs, psd = signal.welch(road.heights, fs=1.0 / road.spacing, nperseg=8192)
        band = (freqs >= 0.02) & (freqs <= 2.0)
        slope = np.polyfit(np.log(freqs[band]), np.log(psd[band]), 1)[0]
        assert -2.2 <= slope <= -1.8

    def test_rejects_unknown_class(self):
        with pytest.raises(ValueError):
            generate_road(100.0, 0.1, "Z", seed=0)


class TestIdentification:
    def test_noiseless_recovers_rates(self, default_params, class_c_road):
        stream = simulate_run(class_c_road, default_params, 10.0, 60.0, dt=2e-4)
        est = identify_parameters(
            stream, class_c_road, wheel_mass=default_params.wheel_mass
        )
        assert est.spring_rate == pytest.approx(default_params.spring_rate, rel=1e-3)
        assert est.damping_coefficient == pytest.approx(
            default_params.damping_coefficient, rel=1e-3
        )
        assert est.tire_rate == pytest.approx(default_params.tire_rate, rel=1e-3)
        assert est.residual_rms < 1.0

    def test_flat_road_is_rank_deficient(self, default_params):
        road = RoadInput(np.zeros(2000), 0.5)
        stream = simulate_run(road, default_params, 10.0, 30.0, dt=1e-3)
        with pytest.raises(InsufficientExcitationError):
            identify_parameters(stream, road, wheel_mass=default_params.wheel_mass)

    @pytest.mark.parametrize("seed", [11, 12, 13])
    def test_noisy_within_five_percent(self, default_params, class_c_road, seed):
        stream = simulate_run(
            class_c_road,
            default_params,
            10.0,
            60.0,
            dt=2e-4,
            noise=NoiseConfig(accel_std=0.1),
            seed=seed,
        )
        est = identify_parameters(
            stream, class_c_road, wheel_mass=default_params.wheel_mass
        )
        assert est.spring_rate == pytest.approx(default_params.spring_rate, rel=0.05)
        assert est.damping_coefficient == pytest.approx(
            default_params.damping_coefficient, rel=0.05
        )
        assert est.tire_rate == pytest.approx(default_params.tire_rate, rel=0.05)

    def test_estimator_facade(self, default_params, class_c_road):
        stream = simulate_run(class_c_road, default_params, 10.0, 40.0, dt=5e-4)
        ident = QuarterCarIdentifier(wheel_mass=default_params.wheel_mass)
        ident.fit(stream, class_c_road)
        assert ident.spring_rate_ == pytest.approx(
            default_params.spring_rate, rel=5e-3
        )
        assert ident.get_params()["wheel_mass"] == default_params.wheel_mass
