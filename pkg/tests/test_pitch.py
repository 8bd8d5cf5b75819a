import numpy as np
import pytest

from terrainloc.matching import locate_snippet
from terrainloc.pitch import (
    CornerProfiles,
    PitchTransformer,
    VehicleGeometry,
    combine_corner_heights,
    compute_pitch_profile,
    derive_pitch_from_heights,
    differentiate_profile,
    matching_signal,
)
from terrainloc.resample import DistanceProfile, crop


def corners_from(fl, fr, rl, rr, spacing=0.1):
    return CornerProfiles(
        front_left=DistanceProfile(np.asarray(fl, float), spacing=spacing),
        front_right=DistanceProfile(np.asarray(fr, float), spacing=spacing),
        rear_left=DistanceProfile(np.asarray(rl, float), spacing=spacing),
        rear_right=DistanceProfile(np.asarray(rr, float), spacing=spacing),
    )


def rolling_road(n=3000, seed=1, spacing=0.1):
    """Smooth random road for synthetic corner construction."""
    rng = np.random.default_rng(seed)
    rough = np.cumsum(rng.normal(0.0, 1e-3, n + 200))
    kernel = np.hanning(21)
    kernel /= kernel.sum()
    smooth = np.convolve(rough, kernel, mode="same")
    return smooth[100 : 100 + n]


def corners_on_road(road, lag_cells, spacing=0.1, noise=0.0, seed=0):
    """Front pair sees road[d], rear pair road[d - lag] on the travel axis."""
    rng = np.random.default_rng(seed)
    n = len(road) - lag_cells
    front = road[lag_cells:]
    rear = road[:n]

    def jitter(x):
        return x + rng.normal(0.0, noise, n) if noise else x.copy()

    return corners_from(jitter(front), jitter(front), jitter(rear), jitter(rear), spacing)


def test_equal_corners_give_zero_pitch():
    c = corners_from([1, 2, 3], [1, 2, 3], [1, 2, 3], [1, 2, 3])
    pitch = compute_pitch_profile(c, VehicleGeometry(2.0))
    assert np.all(pitch.values == 0.0)


def test_direct_substitution():
    c = corners_from([0.1] * 5, [0.1] * 5, [0.0] * 5, [0.0] * 5)
    pitch = compute_pitch_profile(c, VehicleGeometry(2.0))
    assert np.allclose(pitch.values, np.arctan(0.05))
    assert pitch.units == "rad"


def test_front_rear_swap_negates_pitch():
    rng = np.random.default_rng(2)
    vals = [rng.normal(size=50) for _ in range(4)]
    geometry = VehicleGeometry(2.968)
    forward = compute_pitch_profile(corners_from(*vals), geometry)
    swapped = compute_pitch_profile(
        corners_from(vals[2], vals[3], vals[0], vals[1]), geometry
    )
    assert np.array_equal(swapped.values, -forward.values)


def test_misaligned_corners_rejected():
    with pytest.raises(ValueError):
        corners_from([1, 2, 3], [1, 2], [1, 2, 3], [1, 2, 3])


class TestDifferentiate:
    def test_constant_gives_zeros(self):
        p = DistanceProfile(np.full(50, 2.0), spacing=0.1)
        out = differentiate_profile(p, order=1)
        assert np.all(out.values == 0.0)
        assert len(out.values) == 48
        assert out.start_offset == pytest.approx(0.1)

    def test_linear_ramp_exact(self):
        d = np.arange(100) * 0.1
        p = DistanceProfile(0.7 * d, spacing=0.1)
        out = differentiate_profile(p, order=1)
        assert np.max(np.abs(out.values - 0.7)) < 1e-12

    def test_second_derivative_of_sine(self):
        spacing = 0.1
        k = 2.0 * np.pi / 5.0
        d = np.arange(2000) * spacing
        p = DistanceProfile(np.sin(k * d), spacing=spacing)
        out = differentiate_profile(p, order=2)
        expected_exact = -((np.sin(k * spacing) / spacing) ** 2) * np.sin(
            k * d[2:-2]
        )
        # the double central stencil has a closed discrete form ...
        assert np.max(np.abs(out.values - expected_exact)) < 1e-11
        # ... and stays within O(spacing^2) of the analytic -k^2 sin
        analytic = -(k**2) * np.sin(k * d[2:-2])
        bound = 0.5 * k**4 * spacing**2
        assert np.max(np.abs(out.values - analytic)) <= bound

    def test_too_short_rejected(self):
        p = DistanceProfile(np.zeros(4), spacing=0.1)
        with pytest.raises(ValueError):
            differentiate_profile(p, order=2)

    def test_units_progression(self):
        p = DistanceProfile(np.linspace(0, 1, 30), spacing=0.1, units="rad")
        d1 = differentiate_profile(p, order=1)
        d2 = differentiate_profile(d1, order=1)
        assert d1.units == "rad_per_m"
        assert d2.units == "rad_per_m2"

    def test_commutes_with_crop_away_from_edges(self):
        p = DistanceProfile(rolling_road(500), spacing=0.1)
        inner = crop(differentiate_profile(p, order=1), 10.0, 20.0)
        cropped = differentiate_profile(crop(p, 9.5, 21.5), order=1)
        other = crop(cropped, 10.0, 20.0)
        assert np.allclose(inner.values, other.values, atol=1e-12)


def test_twice_differentiated_profile_is_near_zero_mean():
    p = DistanceProfile(rolling_road(3000, seed=4), spacing=0.1)
    d2 = differentiate_profile(p, order=2)
    assert len(d2.values) >= 1000
    rms = np.sqrt(np.mean(d2.values**2))
    assert abs(d2.values.mean()) < 1e-3 * rms


def test_combine_corner_heights_aligns_rear():
    geometry = VehicleGeometry(3.0)  # 30 cells at 0.1 m
    road = rolling_road(800, seed=6)
    corners = corners_on_road(road, lag_cells=30)
    combined = combine_corner_heights(corners, geometry)
    # every sample should equal the road at the front wheel position
    front = road[30:]
    assert np.allclose(combined.values, front[: len(combined.values)], atol=1e-12)


def test_pitch_from_heights_matches_corner_pitch():
    geometry = VehicleGeometry(3.0)
    road = rolling_road(900, seed=7)
    corners = corners_on_road(road, lag_cells=30)
    corner_pitch = compute_pitch_profile(corners, geometry)
    heights = combine_corner_heights(corners, geometry)
    derived = derive_pitch_from_heights(heights, geometry)
    # derived pitch is anchored at the front axle; align and compare
    offset_cells = int(round((derived.start_offset - corner_pitch.start_offset) / 0.1))
    overlap = min(len(derived.values), len(corner_pitch.values) - offset_cells)
    assert overlap > 500
    assert np.allclose(
        derived.values[:overlap],
        corner_pitch.values[offset_cells : offset_cells + overlap],
        atol=1e-12,
    )


def test_wheelbase_scale_does_not_move_the_matching_peak():
    road = rolling_road(4000, seed=8)
    lag = 30
    corners = corners_on_road(road, lag_cells=lag, noise=2e-4, seed=9)
    stream_sig = matching_signal(
        combine_corner_heights(corners, VehicleGeometry(1.0)), VehicleGeometry(1.0)
    )
    offset_cells = 1200
    n_snip = 600
    double = VehicleGeometry(2.0)
    snippet_heights = DistanceProfile(
        combine_corner_heights(corners, double).values[
            offset_cells : offset_cells + n_snip
        ],
        spacing=0.1,
    )
    snip_sig = matching_signal(snippet_heights, double)
    # wheelbase mismatch shrinks amplitudes but the correlation peak stays put
    result = locate_snippet(snip_sig.values, stream_sig.values)
    k1, k2 = VehicleGeometry(1.0).wheelbase_cells(0.1), double.wheelbase_cells(0.1)
    expected_lag = offset_cells + (k2 - k1)
    assert abs(result.best_lag - expected_lag) <= 1


def test_pitch_transformer_facade():
    c = corners_from(*(np.sin(np.arange(100) / 7.0) for _ in range(4)))
    out = PitchTransformer(wheelbase_m=2.5).fit().transform(c)
    assert np.all(out.values == 0.0)
    params = PitchTransformer(wheelbase_m=2.5).get_params()
    assert params["wheelbase_m"] == 2.5
