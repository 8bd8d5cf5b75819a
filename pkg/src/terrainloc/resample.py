"""Conversion of time-indexed profiles to uniformly distance-indexed profiles."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .validation import as_float_array, check_positive

DEFAULT_SPACING_M = 0.1

#: allowed values for DistanceProfile.units
PROFILE_UNITS = ("m", "rad", "rad_per_m", "rad_per_m2")


class EmptyProfileError(ValueError):
    """Raised when a conversion yields no usable grid samples."""


@dataclass
class DistanceProfile:
    """A uniformly distance-sampled sequence of heights or pitch values.

    ``values[i]`` sits at longitudinal position ``start_offset + i * spacing``
    (meters along the travel axis of whoever produced it).
    """

    values: np.ndarray
    spacing: float = DEFAULT_SPACING_M
    start_offset: float = 0.0
    units: str = "m"

    def __post_init__(self):
        self.values = as_float_array(self.values, "values")
        self.spacing = check_positive(self.spacing, "spacing")
        self.start_offset = float(self.start_offset)
        if self.units not in PROFILE_UNITS:
            raise ValueError(f"unknown units tag {self.units!r}")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def length_m(self) -> float:
        """Grid extent: one spacing per cell (half-open interval)."""
        return len(self.values) * self.spacing

    @property
    def end_offset(self) -> float:
        """Position of the last sample."""
        return self.start_offset + (len(self.values) - 1) * self.spacing

    def distances(self) -> np.ndarray:
        return self.start_offset + np.arange(len(self.values)) * self.spacing

    def with_values(self, values, units: str | None = None) -> "DistanceProfile":
        return replace(self, values=values, units=units or self.units)


def convert_time_to_distance(
    profile, spacing: float = DEFAULT_SPACING_M
) -> DistanceProfile:
    """Resample a time-indexed profile onto a uniform distance grid.

    Streaming semantics: records are consumed in time order, records with
    zero speed are skipped entirely (they advance neither distance nor the
    interpolation state), distance accumulates by the trapezoidal rule
    between consecutive kept records, and every grid point that falls inside
    a record interval is emitted by linear interpolation. The first grid
    point sits at the start of motion (distance 0).
    """
    spacing = check_positive(spacing, "spacing")
    t = np.asarray(profile.time, dtype=np.float64)
    r = np.asarray(profile.height, dtype=np.float64)
    v = np.asarray(profile.speed, dtype=np.float64)
    if not (len(t) == len(r) == len(v)):
        raise ValueError("time/height/speed lengths differ")
    if np.any(v < 0.0):
        raise ValueError("speeds must be non-negative")

    keep = v > 0.0
    if np.count_nonzero(keep) < 2:
        raise EmptyProfileError("need at least two records with positive speed")
    tk, rk, vk = t[keep], r[keep], v[keep]
    if np.any(np.diff(tk) <= 0.0):
        raise ValueError("timestamps must be strictly increasing")

    # trapezoidal distance between consecutive kept records
    d = np.empty_like(tk)
    d[0] = 0.0
    np.cumsum(0.5 * (vk[1:] + vk[:-1]) * np.diff(tk), out=d[1:])
    total = d[-1]
    if total < spacing:
        raise EmptyProfileError(
            f"total distance {total:.3g} m is shorter than one grid step"
        )

    n_cells = int(np.floor(total / spacing + 1e-9)) + 1
    grid = np.arange(n_cells) * spacing
    # piecewise-linear interpolation in distance; identical to emitting each
    # grid point with (r - r_old)*(d_map - d_old)/(d_new - d_old) + r_old
    values = np.interp(grid, d, rk)
    return DistanceProfile(values, spacing=spacing, start_offset=0.0, units="m")


def crop(profile: DistanceProfile, start: float, length: float) -> DistanceProfile:
    """Extract the grid-snapped half-open range ``[start, start + length)``.

    ``start`` is measured on the profile's own axis (absolute, i.e. relative
    to the same origin as ``start_offset``); ``length`` counts one spacing
    per cell, so cropping the full ``length_m`` is the identity.
    """
    if length < 0:
        raise ValueError("length must be non-negative")
    i0 = int(round((start - profile.start_offset) / profile.spacing))
    n = int(round(length / profile.spacing))
    if i0 < 0 or i0 + n > len(profile.values):
        raise ValueError(
            f"crop [{start}, {start + length}] outside profile extent "
            f"[{profile.start_offset}, {profile.end_offset}]"
        )
    return DistanceProfile(
        profile.values[i0 : i0 + n].copy(),
        spacing=profile.spacing,
        start_offset=profile.start_offset + i0 * profile.spacing,
        units=profile.units,
    )


def crop_cells(profile: DistanceProfile, i0: int, n: int) -> DistanceProfile:
    """Cell-index variant of :func:`crop`."""
    if i0 < 0 or n < 0 or i0 + n > len(profile.values):
        raise ValueError("cell range outside profile extent")
    return DistanceProfile(
        profile.values[i0 : i0 + n].copy(),
        spacing=profile.spacing,
        start_offset=profile.start_offset + i0 * profile.spacing,
        units=profile.units,
    )


class TimeToDistanceResampler(TransformerMixin, BaseEstimator):
    """Transformer facade over :func:`convert_time_to_distance`."""

    def __init__(self, spacing_m: float = DEFAULT_SPACING_M):
        self.spacing_m = spacing_m

    def fit(self, X=None, y=None):
        return self

    def transform(self, X) -> DistanceProfile:
        return convert_time_to_distance(X, spacing=self.spacing_m)
