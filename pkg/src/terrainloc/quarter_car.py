"""Quarter-car suspension simulation, synthetic roads, and parameter identification.

The two-mass model (body + wheel assembly) is the ground-truth generator for
the whole pipeline: it turns a road height profile into the sensor channels
an active suspension reports (wheel acceleration, shock displacement and
velocity, actuator force, vehicle speed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import signal as _signal
from sklearn.base import BaseEstimator

from .validation import (
    as_float_array,
    check_non_negative,
    check_positive,
    check_uniform_sampling,
)

MAX_STEP_S = 0.01

ROUGHNESS_CLASSES = ("A", "B", "C", "D")
# displacement PSD at the 0.1 cycles/m reference frequency, per class (m^3)
_CLASS_PSD_REF = {"A": 16e-6, "B": 64e-6, "C": 256e-6, "D": 1024e-6}
_PSD_REF_FREQ = 0.1  # cycles/m
_PSD_MIN_FREQ = 0.01  # cycles/m; longer waves are irrelevant for matching


class SimulationBlowupError(ArithmeticError):
    """Integrator produced a non-finite state (step too large for stiffness)."""


class RoadTooShortError(ValueError):
    """The road does not cover the distance the run would travel."""


class InsufficientExcitationError(ValueError):
    """Identification regressors are rank deficient."""


@dataclass(frozen=True)
class QuarterCarParams:
    """Physical coefficients of the quarter-car model."""

    body_mass: float = 400.0  # kg
    wheel_mass: float = 50.0  # kg
    spring_rate: float = 2.0e4  # N/m
    tire_rate: float = 2.0e5  # N/m
    damping_coefficient: float = 1.5e3  # N*s/m (linearized)
    actuator_force_limit: float = 4.0e3  # N

    def __post_init__(self):
        check_positive(self.body_mass, "body_mass")
        check_positive(self.wheel_mass, "wheel_mass")
        check_positive(self.spring_rate, "spring_rate")
        check_positive(self.tire_rate, "tire_rate")
        check_non_negative(self.damping_coefficient, "damping_coefficient")
        check_positive(self.actuator_force_limit, "actuator_force_limit")

    def state_matrix(self) -> np.ndarray:
        """Continuous-time state matrix over (body pos, body vel, wheel pos, wheel vel)."""
        ks, kt, bs = self.spring_rate, self.tire_rate, self.damping_coefficient
        mb, mw = self.body_mass, self.wheel_mass
        return np.array(
            [
                [0.0, 1.0, 0.0, 0.0],
                [-ks / mb, -bs / mb, ks / mb, bs / mb],
                [0.0, 0.0, 0.0, 1.0],
                [ks / mw, bs / mw, -(ks + kt) / mw, -bs / mw],
            ]
        )

    def input_matrix(self) -> np.ndarray:
        """Columns: road height, actuator force."""
        return np.array(
            [
                [0.0, 0.0],
                [0.0, 1.0 / self.body_mass],
                [0.0, 0.0],
                [self.tire_rate / self.wheel_mass, -1.0 / self.wheel_mass],
            ]
        )


@dataclass(frozen=True)
class QuarterCarState:
    body_position: float = 0.0
    body_velocity: float = 0.0
    wheel_position: float = 0.0
    wheel_velocity: float = 0.0

    @property
    def shock_displacement(self) -> float:
        return self.body_position - self.wheel_position

    @property
    def shock_velocity(self) -> float:
        return self.body_velocity - self.wheel_velocity

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.body_position,
                self.body_velocity,
                self.wheel_position,
                self.wheel_velocity,
            ]
        )

    @classmethod
    def from_array(cls, x) -> "QuarterCarState":
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]))


@dataclass
class RoadInput:
    """Road height sampled at fixed spacing; optionally a closed loop."""

    heights: np.ndarray
    spacing: float
    loop: bool = False

    def __post_init__(self):
        self.heights = as_float_array(self.heights, "heights")
        self.spacing = check_positive(self.spacing, "spacing")
        if len(self.heights) < 2:
            raise ValueError("road needs at least two samples")

    @property
    def length_m(self) -> float:
        n = len(self.heights)
        return n * self.spacing if self.loop else (n - 1) * self.spacing

    def height_at(self, position):
        """Linear interpolation; loops wrap, open roads clamp to their ends."""
        pos = np.asarray(position, dtype=np.float64)
        n = len(self.heights)
        if self.loop:
            period = n * self.spacing
            pos = np.mod(pos, period)
            idx = np.minimum((pos / self.spacing).astype(np.int64), n - 1)
            frac = pos / self.spacing - idx
            nxt = np.mod(idx + 1, n)
            out = self.heights[idx] * (1.0 - frac) + self.heights[nxt] * frac
        else:
            pos = np.clip(pos, 0.0, (n - 1) * self.spacing)
            idx = np.minimum((pos / self.spacing).astype(np.int64), n - 2)
            frac = pos / self.spacing - idx
            out = self.heights[idx] * (1.0 - frac) + self.heights[idx + 1] * frac
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class NoiseConfig:
    """Additive white Gaussian noise, one std dev per sensor channel."""

    accel_std: float = 0.0  # m/s^2
    shock_disp_std: float = 0.0  # m
    shock_vel_std: float = 0.0  # m/s
    force_std: float = 0.0  # N
    speed_std: float = 0.0  # m/s

    def any_noise(self) -> bool:
        return any(
            s > 0.0
            for s in (
                self.accel_std,
                self.shock_disp_std,
                self.shock_vel_std,
                self.force_std,
                self.speed_std,
            )
        )


@dataclass
class SimulationTruth:
    """Noise-free internals kept alongside a stream for testing and evaluation."""

    states: np.ndarray  # (N, 4) body pos/vel, wheel pos/vel
    distance: np.ndarray  # (N,) traveled distance at each sample
    road_height: np.ndarray  # (N,) height under the wheel


@dataclass
class SensorStream:
    """Per-timestep suspension sensor records at a constant sample period."""

    time: np.ndarray
    wheel_accel: np.ndarray  # m/s^2
    shock_disp: np.ndarray  # m
    shock_vel: np.ndarray  # m/s
    force: np.ndarray  # N
    speed: np.ndarray  # m/s
    truth: Optional[SimulationTruth] = None  # simulator-only payload

    def __post_init__(self):
        n = len(self.time)
        for name in ("wheel_accel", "shock_disp", "shock_vel", "force", "speed"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"channel {name} length mismatch")

    def sample_period(self) -> float:
        return check_uniform_sampling(self.time)

    def __len__(self) -> int:
        return len(self.time)


def _derivatives(x1, x2, x3, x4, road, force, p: QuarterCarParams):
    sd = x1 - x3
    sv = x2 - x4
    susp = p.spring_rate * sd + p.damping_coefficient * sv - force
    a_body = -susp / p.body_mass
    a_wheel = (susp - p.tire_rate * (x3 - road)) / p.wheel_mass
    return x2, a_body, x4, a_wheel


def _rk4_step(x1, x2, x3, x4, r0, rm, r1, force, dt, p: QuarterCarParams):
    """One classic Runge-Kutta step; road height given at t, t+dt/2, t+dt."""
    h = dt * 0.5
    k1 = _derivatives(x1, x2, x3, x4, r0, force, p)
    k2 = _derivatives(x1 + h * k1[0], x2 + h * k1[1], x3 + h * k1[2], x4 + h * k1[3], rm, force, p)
    k3 = _derivatives(x1 + h * k2[0], x2 + h * k2[1], x3 + h * k2[2], x4 + h * k2[3], rm, force, p)
    k4 = _derivatives(x1 + dt * k3[0], x2 + dt * k3[1], x3 + dt * k3[2], x4 + dt * k3[3], r1, force, p)
    s = dt / 6.0
    return (
        x1 + s * (k1[0] + 2.0 * (k2[0] + k3[0]) + k4[0]),
        x2 + s * (k1[1] + 2.0 * (k2[1] + k3[1]) + k4[1]),
        x3 + s * (k1[2] + 2.0 * (k2[2] + k3[2]) + k4[2]),
        x4 + s * (k1[3] + 2.0 * (k2[3] + k3[3]) + k4[3]),
    )


def step_dynamics(
    state: QuarterCarState,
    params: QuarterCarParams,
    road_height,
    force: float = 0.0,
    dt: float = 1e-3,
) -> QuarterCarState:
    """Advance the suspension by one fixed-step RK4 step.

    ``road_height`` is either a constant height for the whole step or a
    callable of the intra-step time in ``[0, dt]``.
    """
    if not 0.0 < dt <= MAX_STEP_S:
        raise ValueError(f"dt must be in (0, {MAX_STEP_S}], got {dt}")
    if callable(road_height):
        r0, rm, r1 = road_height(0.0), road_height(dt / 2.0), road_height(dt)
    else:
        r0 = rm = r1 = float(road_height)
    out = _rk4_step(
        state.body_position,
        state.body_velocity,
        state.wheel_position,
        state.wheel_velocity,
        float(r0),
        float(rm),
        float(r1),
        float(force),
        dt,
        params,
    )
    if not all(np.isfinite(out)):
        raise SimulationBlowupError(
            "state became non-finite; reduce dt for this stiffness"
        )
    return QuarterCarState(*out)


def _speed_function(speed_profile) -> Callable[[float], float]:
    if callable(speed_profile):
        return speed_profile
    v = float(speed_profile)
    return lambda _t: v


def simulate_run(
    road: RoadInput,
    params: QuarterCarParams,
    speed_profile,
    duration: float,
    dt: float = 1e-3,
    noise: NoiseConfig | None = None,
    seed: int | None = None,
    force_profile=None,
    position_offset: float = 0.0,
    keep_truth: bool = True,
) -> SensorStream:
    """Drive the quarter car over ``road`` and return its sensor stream.

    ``speed_profile`` is a constant (m/s) or a callable of time; the wheel
    samples the road at traveled distance plus ``position_offset`` (negative
    for a rear wheel trailing the odometer origin). Noise is applied to the
    recorded channels only and never feeds back into the dynamics.
    """
    if not 0.0 < dt <= MAX_STEP_S:
        raise ValueError(f"dt must be in (0, {MAX_STEP_S}], got {dt}")
    check_positive(duration, "duration")
    speed = _speed_function(speed_profile)
    force = _force_function(force_profile, params)

    n_steps = int(round(duration / dt))
    n = n_steps + 1
    t = np.arange(n) * dt

    # precompute speeds at sample times and midpoints
    v_samples = np.array([speed(ti) for ti in t])
    if np.any(v_samples < 0.0):
        raise ValueError("speed_profile must be non-negative")
    v_mid = np.array([speed(ti + dt / 2.0) for ti in t[:-1]])

    # traveled distance via trapezoidal accumulation
    dist = np.empty(n)
    dist[0] = 0.0
    np.cumsum(0.5 * (v_samples[1:] + v_samples[:-1]) * dt, out=dist[1:])
    if not road.loop:
        max_pos = float(dist[-1] + max(position_offset, 0.0))
        if max_pos > road.length_m + 1e-9:
            raise RoadTooShortError(
                f"run travels {max_pos:.1f} m but road covers {road.length_m:.1f} m"
            )

    heights = road.height_at(dist + position_offset)
    # road height at the RK4 midpoint positions of every step, in one shot
    mid_heights = road.height_at(dist[:-1] + position_offset + v_mid * (dt / 2.0))
    forces = np.array([force(ti) for ti in t])

    ks, kt, bs = params.spring_rate, params.tire_rate, params.damping_coefficient
    mb, mw = params.body_mass, params.wheel_mass
    h = dt * 0.5
    s6 = dt / 6.0

    states = np.zeros((n, 4))
    accel = np.zeros(n)
    x1 = x2 = x3 = x4 = 0.0
    h_list = heights.tolist()
    m_list = mid_heights.tolist()
    f_list = forces.tolist()
    for i in range(n):
        r_now = h_list[i]
        f_now = f_list[i]
        susp = ks * (x1 - x3) + bs * (x2 - x4) - f_now
        accel[i] = (susp - kt * (x3 - r_now)) / mw
        states[i, 0] = x1
        states[i, 1] = x2
        states[i, 2] = x3
        states[i, 3] = x4
        if i == n_steps:
            break
        rm = m_list[i]
        r_next = h_list[i + 1]
        # classic RK4 stages, inlined for speed on long runs
        s1 = ks * (x1 - x3) + bs * (x2 - x4) - f_now
        k1_1 = x2
        k1_2 = -s1 / mb
        k1_3 = x4
        k1_4 = (s1 - kt * (x3 - r_now)) / mw

        a1 = x1 + h * k1_1
        a2 = x2 + h * k1_2
        a3 = x3 + h * k1_3
        a4 = x4 + h * k1_4
        s2 = ks * (a1 - a3) + bs * (a2 - a4) - f_now
        k2_1 = a2
        k2_2 = -s2 / mb
        k2_3 = a4
        k2_4 = (s2 - kt * (a3 - rm)) / mw

        a1 = x1 + h * k2_1
        a2 = x2 + h * k2_2
        a3 = x3 + h * k2_3
        a4 = x4 + h * k2_4
        s3 = ks * (a1 - a3) + bs * (a2 - a4) - f_now
        k3_1 = a2
        k3_2 = -s3 / mb
        k3_3 = a4
        k3_4 = (s3 - kt * (a3 - rm)) / mw

        a1 = x1 + dt * k3_1
        a2 = x2 + dt * k3_2
        a3 = x3 + dt * k3_3
        a4 = x4 + dt * k3_4
        s4 = ks * (a1 - a3) + bs * (a2 - a4) - f_now
        k4_1 = a2
        k4_2 = -s4 / mb
        k4_3 = a4
        k4_4 = (s4 - kt * (a3 - r_next)) / mw

        x1 = x1 + s6 * (k1_1 + 2.0 * (k2_1 + k3_1) + k4_1)
        x2 = x2 + s6 * (k1_2 + 2.0 * (k2_2 + k3_2) + k4_2)
        x3 = x3 + s6 * (k1_3 + 2.0 * (k2_3 + k3_3) + k4_3)
        x4 = x4 + s6 * (k1_4 + 2.0 * (k2_4 + k3_4) + k4_4)
    if not (np.isfinite(x1) and np.isfinite(x3)):
        raise SimulationBlowupError(
            "state became non-finite; reduce dt for this stiffness"
        )

    shock_disp = states[:, 0] - states[:, 2]
    shock_vel = states[:, 1] - states[:, 3]
    speed_ch = v_samples.copy()

    noise = noise or NoiseConfig()
    if noise.any_noise():
        rng = np.random.default_rng(seed)
        accel_ch = accel + rng.normal(0.0, noise.accel_std, n) if noise.accel_std else accel.copy()
        sd_ch = shock_disp + rng.normal(0.0, noise.shock_disp_std, n) if noise.shock_disp_std else shock_disp.copy()
        sv_ch = shock_vel + rng.normal(0.0, noise.shock_vel_std, n) if noise.shock_vel_std else shock_vel.copy()
        f_ch = forces + rng.normal(0.0, noise.force_std, n) if noise.force_std else forces.copy()
        if noise.speed_std:
            speed_ch = np.maximum(speed_ch + rng.normal(0.0, noise.speed_std, n), 0.0)
    else:
        accel_ch, sd_ch, sv_ch, f_ch = accel.copy(), shock_disp.copy(), shock_vel.copy(), forces.copy()

    truth = (
        SimulationTruth(states=states, distance=dist, road_height=heights)
        if keep_truth
        else None
    )
    return SensorStream(
        time=t,
        wheel_accel=accel_ch,
        shock_disp=sd_ch,
        shock_vel=sv_ch,
        force=f_ch,
        speed=speed_ch,
        truth=truth,
    )


def _force_function(force_profile, params: QuarterCarParams):
    limit = params.actuator_force_limit
    if force_profile is None:
        return lambda _t: 0.0
    if callable(force_profile):
        return lambda t: float(np.clip(force_profile(t), -limit, limit))
    f = float(np.clip(force_profile, -limit, limit))
    return lambda _t: f


def generate_road(
    length: float,
    spacing: float,
    roughness_class: str = "C",
    seed: int | None = None,
    loop: bool = False,
) -> RoadInput:
    """Synthesize a zero-mean road whose spatial PSD falls off as 1/f^2.

    Classes A-D scale the PSD like the usual road roughness bands; the same
    seed always reproduces the same road.
    """
    check_positive(length, "length")
    check_positive(spacing, "spacing")
    if length <= spacing:
        raise ValueError("length must exceed spacing")
    if roughness_class not in _CLASS_PSD_REF:
        raise ValueError(f"roughness_class must be one of {ROUGHNESS_CLASSES}")

    n = int(round(length / spacing))
    freqs = np.fft.rfftfreq(n, d=spacing)
    psd = np.zeros_like(freqs)
    band = freqs >= _PSD_MIN_FREQ
    ref = _CLASS_PSD_REF[roughness_class]
    psd[band] = ref * (freqs[band] / _PSD_REF_FREQ) ** -2.0

    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, len(freqs))
    # deterministic amplitudes, random phases: periodogram equals the target PSD
    amplitudes = np.sqrt(psd * n / (2.0 * spacing))
    spectrum = amplitudes * np.exp(1j * phases)
    spectrum[0] = 0.0
    if n % 2 == 0:
        spectrum[-1] = np.abs(spectrum[-1])  # Nyquist bin must be real
    heights = np.fft.irfft(spectrum, n)
    heights -= heights.mean()
    return RoadInput(heights=heights, spacing=spacing, loop=loop)


@dataclass(frozen=True)
class IdentifiedParams:
    spring_rate: float
    damping_coefficient: float
    tire_rate: float
    residual_rms: float
    condition_number: float


def identify_parameters(
    stream: SensorStream,
    road: RoadInput,
    wheel_mass: float = 50.0,
    highpass_cutoff_hz: float = 0.5,
    band_hz: tuple[float, float] = (2.0, 30.0),
    settle_s: float | None = None,
) -> IdentifiedParams:
    """Estimate spring, damping and tire rates by least squares.

    The wheel equation of motion is rearranged so the only unknowns are the
    three rates; the wheel position enters through the same double-integrated,
    high-passed estimate the profile reconstruction uses, and every column is
    band-pass filtered identically so the per-sample identity is preserved.
    """
    from .reconstruction import double_integrate_highpass, highpass_series

    period = stream.sample_period()
    wheel_mass = check_positive(wheel_mass, "wheel_mass")

    dist = np.empty(len(stream))
    dist[0] = 0.0
    np.cumsum(
        0.5 * (stream.speed[1:] + stream.speed[:-1]) * np.diff(stream.time),
        out=dist[1:],
    )
    road_heights = road.height_at(dist)

    x3_hat = double_integrate_highpass(stream.wheel_accel, period, highpass_cutoff_hz)

    def hp2(series):
        return highpass_series(
            highpass_series(series, period, highpass_cutoff_hz),
            period,
            highpass_cutoff_hz,
        )

    target = wheel_mass * hp2(stream.wheel_accel) + hp2(stream.force)
    col_sd = hp2(stream.shock_disp)
    col_sv = hp2(stream.shock_vel)
    col_tire = hp2(road_heights) - x3_hat

    nyq = 0.5 / period
    lo, hi = band_hz
    if 0.0 < lo < hi < nyq:
        sos = _signal.butter(2, [lo, hi], btype="bandpass", fs=1.0 / period, output="sos")
        target, col_sd, col_sv, col_tire = (
            _signal.sosfiltfilt(sos, c) for c in (target, col_sd, col_sv, col_tire)
        )

    settle = 5.0 / highpass_cutoff_hz if settle_s is None else settle_s
    skip = min(int(settle / period), len(target) - 2)
    trim = max(int(1.0 / period), 1)  # discard filtfilt edge effects
    sl = slice(skip, len(target) - trim)
    phi = np.column_stack([col_sd[sl], col_sv[sl], col_tire[sl]])
    y = target[sl]

    scales = np.sqrt(np.mean(phi**2, axis=0))
    if np.any(scales < 1e-15):
        raise InsufficientExcitationError(
            "one or more regressors are identically zero (no excitation)"
        )
    cond = float(np.linalg.cond(phi / scales))
    if cond > 1e8:
        raise InsufficientExcitationError(
            f"regression matrix is rank deficient (condition number {cond:.3g})"
        )
    coef, _res, _rank, _sv = np.linalg.lstsq(phi, y, rcond=None)
    residual = y - phi @ coef
    return IdentifiedParams(
        spring_rate=float(coef[0]),
        damping_coefficient=float(coef[1]),
        tire_rate=float(coef[2]),
        residual_rms=float(np.sqrt(np.mean(residual**2))),
        condition_number=cond,
    )


class QuarterCarIdentifier(BaseEstimator):
    """sklearn-style wrapper: fit on a sensor stream plus the road it drove."""

    def __init__(
        self,
        wheel_mass: float = 50.0,
        highpass_cutoff_hz: float = 0.5,
        band_hz: tuple[float, float] = (2.0, 30.0),
    ):
        self.wheel_mass = wheel_mass
        self.highpass_cutoff_hz = highpass_cutoff_hz
        self.band_hz = band_hz

    def fit(self, X: SensorStream, y: RoadInput):
        est = identify_parameters(
            X,
            y,
            wheel_mass=self.wheel_mass,
            highpass_cutoff_hz=self.highpass_cutoff_hz,
            band_hz=self.band_hz,
        )
        self.spring_rate_ = est.spring_rate
        self.damping_coefficient_ = est.damping_coefficient
        self.tire_rate_ = est.tire_rate
        self.residual_rms_ = est.residual_rms
        self.condition_number_ = est.condition_number
        return self
