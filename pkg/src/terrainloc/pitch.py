"""Chassis pitch profiles from corner road heights, and distance differentiation.

Matching never runs on raw heights: profiles are turned into pitch and
differentiated twice with respect to distance, which removes reconstruction
drift and leaves the most repeatable part of the signal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .resample import DistanceProfile
from .validation import check_positive, check_same_grid

DEFAULT_WHEELBASE_M = 2.968


@dataclass(frozen=True)
class VehicleGeometry:
    wheelbase: float = DEFAULT_WHEELBASE_M  # front-to-rear axle distance, m

    def __post_init__(self):
        check_positive(self.wheelbase, "wheelbase")

    def wheelbase_cells(self, spacing: float) -> int:
        """Wheelbase rounded to whole grid cells (error at most spacing/2)."""
        k = int(round(self.wheelbase / spacing))
        if k < 1:
            raise ValueError("wheelbase smaller than one grid cell")
        return k


@dataclass
class CornerProfiles:
    """Distance profiles for the four wheels on the common travel axis.

    All four are indexed by vehicle travel distance, so the rear profiles
    naturally carry the road one wheelbase behind the front ones.
    """

    front_left: DistanceProfile
    front_right: DistanceProfile
    rear_left: DistanceProfile
    rear_right: DistanceProfile

    def __post_init__(self):
        check_same_grid(
            [self.front_left, self.front_right, self.rear_left, self.rear_right],
            ["front_left", "front_right", "rear_left", "rear_right"],
        )

    @property
    def spacing(self) -> float:
        return self.front_left.spacing


def compute_pitch_profile(
    corners: CornerProfiles, geometry: VehicleGeometry
) -> DistanceProfile:
    """Element-wise chassis pitch from the four corner heights.

    pitch = atan((fl + fr - rl - rr) / (2 * wheelbase)); swapping the front
    and rear pairs negates the result exactly.
    """
    # grouped so swapping front and rear negates the result bit-exactly
    num = (corners.front_left.values - corners.rear_left.values) + (
        corners.front_right.values - corners.rear_right.values
    )
    values = np.arctan(num / (2.0 * geometry.wheelbase))
    return DistanceProfile(
        values,
        spacing=corners.spacing,
        start_offset=corners.front_left.start_offset,
        units="rad",
    )


def combine_corner_heights(
    corners: CornerProfiles, geometry: VehicleGeometry
) -> DistanceProfile:
    """Average the four corners into one height profile on the travel axis.

    Rear profiles are advanced by the wheelbase (rounded to grid cells) so
    every sample refers to the same road location; the overlap shortens the
    output by that many cells at the tail.
    """
    k = geometry.wheelbase_cells(corners.spacing)
    n = len(corners.front_left.values)
    if n <= k:
        raise ValueError("profiles shorter than the wheelbase shift")
    front = 0.5 * (corners.front_left.values + corners.front_right.values)
    rear = 0.5 * (corners.rear_left.values + corners.rear_right.values)
    combined = 0.5 * (front[: n - k] + rear[k:])
    return DistanceProfile(
        combined,
        spacing=corners.spacing,
        start_offset=corners.front_left.start_offset,
        units="m",
    )


def derive_pitch_from_heights(
    heights: DistanceProfile, geometry: VehicleGeometry
) -> DistanceProfile:
    """Pitch implied by a single height profile and the vehicle wheelbase.

    pitch(s) = atan((h(s) - h(s - wheelbase)) / wheelbase), anchored at the
    front-axle position s, so the output starts one wheelbase shift later
    than the input.
    """
    k = geometry.wheelbase_cells(heights.spacing)
    h = heights.values
    if len(h) <= k:
        raise ValueError("height profile shorter than the wheelbase")
    values = np.arctan((h[k:] - h[:-k]) / geometry.wheelbase)
    return DistanceProfile(
        values,
        spacing=heights.spacing,
        start_offset=heights.start_offset + k * heights.spacing,
        units="rad",
    )


_DERIV_UNITS = {"m": None, "rad": "rad_per_m", "rad_per_m": "rad_per_m2"}


def differentiate_profile(profile: DistanceProfile, order: int = 1) -> DistanceProfile:
    """Central-difference derivative with respect to distance.

    ``order`` first or second derivative; the first and last ``order`` cells
    are dropped and the start offset advances accordingly.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if len(profile.values) <= 2 * order:
        raise ValueError("profile too short to differentiate")
    values = profile.values
    units = profile.units
    for _ in range(order):
        values = (values[2:] - values[:-2]) / (2.0 * profile.spacing)
        units = _DERIV_UNITS.get(units) or units
    return DistanceProfile(
        values,
        spacing=profile.spacing,
        start_offset=profile.start_offset + order * profile.spacing,
        units=units,
    )


def matching_signal(
    heights: DistanceProfile, geometry: VehicleGeometry
) -> DistanceProfile:
    """Twice-differentiated pitch derived from heights; the matching domain."""
    return differentiate_profile(derive_pitch_from_heights(heights, geometry), order=2)


def matching_signal_head_cells(geometry: VehicleGeometry, spacing: float) -> int:
    """Cells trimmed from the head when heights become the matching signal."""
    return geometry.wheelbase_cells(spacing) + 2


class PitchTransformer(TransformerMixin, BaseEstimator):
    """Transformer facade: corner profiles in, chassis pitch profile out."""

    def __init__(self, wheelbase_m: float = DEFAULT_WHEELBASE_M, differentiate: int = 0):
        self.wheelbase_m = wheelbase_m
        self.differentiate = differentiate

    def fit(self, X=None, y=None):
        return self

    def transform(self, X: CornerProfiles) -> DistanceProfile:
        pitch = compute_pitch_profile(X, VehicleGeometry(self.wheelbase_m))
        if self.differentiate:
            pitch = differentiate_profile(pitch, order=self.differentiate)
        return pitch
