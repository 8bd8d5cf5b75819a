"""Road height estimation from suspension sensors (inverse wheel dynamics)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .quarter_car import QuarterCarParams, SensorStream
from .validation import as_float_array, check_positive

DEFAULT_HIGHPASS_HZ = 0.5
#: output earlier than this many filter time constants is flagged transient
TRANSIENT_CYCLES = 5.0


@dataclass
class TimeProfile:
    """Estimated road height as a function of time, with the vehicle speed."""

    time: np.ndarray
    height: np.ndarray
    speed: np.ndarray
    transient_until: float = 0.0  # seconds; head affected by filter warm-up
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.time = as_float_array(self.time, "time")
        self.height = as_float_array(self.height, "height")
        self.speed = as_float_array(self.speed, "speed")
        if not (len(self.time) == len(self.height) == len(self.speed)):
            raise ValueError("time/height/speed lengths differ")
        if len(self.time) > 1 and np.any(np.diff(self.time) <= 0.0):
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.time)


@dataclass(frozen=True)
class ReconstructionConfig:
    params: QuarterCarParams = field(default_factory=QuarterCarParams)
    highpass_cutoff_hz: float = DEFAULT_HIGHPASS_HZ

    def __post_init__(self):
        check_positive(self.highpass_cutoff_hz, "highpass_cutoff_hz")


def highpass_series(x: np.ndarray, period: float, cutoff_hz: float) -> np.ndarray:
    """First-order recursive high-pass y[n] = a*(y[n-1] + x[n] - x[n-1]).

    a = 1 / (1 + 2*pi*cutoff*period); y[0] = 0 so constant inputs map to zero
    from the first sample.
    """
    x = np.asarray(x, dtype=np.float64)
    a = 1.0 / (1.0 + 2.0 * np.pi * cutoff_hz * period)
    # y[n] - a*y[n-1] = a*(x[n] - x[n-1])  ->  linear filter in direct form
    dx = np.empty_like(x)
    dx[0] = 0.0
    np.subtract(x[1:], x[:-1], out=dx[1:])
    from scipy.signal import lfilter

    return lfilter([a], [1.0, -a], dx)


def integrate_trapezoid(x: np.ndarray, period: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    out[0] = 0.0
    np.cumsum(0.5 * period * (x[1:] + x[:-1]), out=out[1:])
    return out


def double_integrate_highpass(
    acceleration: np.ndarray, period: float, cutoff_hz: float = DEFAULT_HIGHPASS_HZ
) -> np.ndarray:
    """Integrate twice (trapezoid), high-passing after each stage.

    Returns a drift-free position estimate: a constant acceleration bias can
    no longer grow quadratically because each integration stage is followed
    by the recursive high-pass.
    """
    period = check_positive(period, "period")
    cutoff_hz = check_positive(cutoff_hz, "cutoff_hz")
    if cutoff_hz >= 0.5 / period:
        raise ValueError("cutoff must be below the Nyquist frequency")
    vel = highpass_series(integrate_trapezoid(acceleration, period), period, cutoff_hz)
    return highpass_series(integrate_trapezoid(vel, period), period, cutoff_hz)


def invert_wheel_dynamics(
    stream: SensorStream, params: QuarterCarParams, wheel_position: np.ndarray
) -> np.ndarray:
    """Algebraic road height from the wheel equation of motion.

    height = (m_w*accel - k_s*sd - b_s*sv + f) / k_t + wheel_position; exact
    on noiseless data when the true wheel position is supplied.
    """
    return (
        params.wheel_mass * stream.wheel_accel
        - params.spring_rate * stream.shock_disp
        - params.damping_coefficient * stream.shock_vel
        + stream.force
    ) / params.tire_rate + wheel_position


def estimate_road_profile(
    stream: SensorStream,
    config: ReconstructionConfig | None = None,
    wheel_position_override: np.ndarray | None = None,
) -> TimeProfile:
    """Reconstruct the road height under one wheel from its sensor stream.

    The wheel position comes from double-integrating the wheel acceleration
    with per-stage high-passing; tests may override it with the true series.
    """
    config = config or ReconstructionConfig()
    period = stream.sample_period()
    if wheel_position_override is not None:
        x3 = np.asarray(wheel_position_override, dtype=np.float64)
        if len(x3) != len(stream):
            raise ValueError("wheel_position_override length mismatch")
        transient = 0.0
    else:
        x3 = double_integrate_highpass(
            stream.wheel_accel, period, config.highpass_cutoff_hz
        )
        transient = TRANSIENT_CYCLES / config.highpass_cutoff_hz
    heights = invert_wheel_dynamics(stream, config.params, x3)
    return TimeProfile(
        time=stream.time.copy(),
        height=heights,
        speed=stream.speed.copy(),
        transient_until=float(stream.time[0] + transient),
        meta={
            "highpass_cutoff_hz": config.highpass_cutoff_hz,
            "highpass_placement": "per-integration-stage",
        },
    )


class RoadProfileReconstructor(TransformerMixin, BaseEstimator):
    """Transformer facade: sensor stream in, time-indexed height profile out."""

    def __init__(
        self,
        params: QuarterCarParams | None = None,
        highpass_cutoff_hz: float = DEFAULT_HIGHPASS_HZ,
    ):
        self.params = params
        self.highpass_cutoff_hz = highpass_cutoff_hz

    def _config(self) -> ReconstructionConfig:
        return ReconstructionConfig(
            params=self.params or QuarterCarParams(),
            highpass_cutoff_hz=self.highpass_cutoff_hz,
        )

    def fit(self, X=None, y=None):
        return self

    def transform(self, X: SensorStream) -> TimeProfile:
        return estimate_road_profile(X, self._config())
