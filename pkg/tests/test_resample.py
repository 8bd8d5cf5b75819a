import numpy as np
import pytest

from terrainloc.reconstruction import TimeProfile
from terrainloc.resample import (
    DistanceProfile,
    EmptyProfileError,
    TimeToDistanceResampler,
    convert_time_to_distance,
    crop,
)


def profile_from(t, r, v):
    return TimeProfile(time=np.asarray(t, float), height=np.asarray(r, float), speed=np.asarray(v, float))


def test_constant_speed_grid_aligned():
    # 10 m/s at 100 Hz: every record interval advances exactly one 0.1 m cell
    n = 101
    t = np.arange(n) * 0.01
    r = np.sin(t)
    out = convert_time_to_distance(profile_from(t, r, np.full(n, 10.0)), 0.1)
    assert len(out.values) == n
    assert out.start_offset == 0.0
    assert np.allclose(out.values, r, atol=1e-12)


def test_constant_height_passes_through():
    t = np.arange(200) * 0.02
    out = convert_time_to_distance(profile_from(t, np.full(200, 1.25), np.full(200, 7.0)), 0.1)
    assert np.all(out.values == 1.25)


def test_affine_signal_is_exact_under_varying_speed():
    rng = np.random.default_rng(3)
    n = 400
    t = np.cumsum(rng.uniform(0.005, 0.05, n))
    v = rng.uniform(0.5, 20.0, n)
    d = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(t))])
    r = 0.4 * d - 1.7  # affine in distance
    out = convert_time_to_distance(profile_from(t, r, v), 0.1)
    expected = 0.4 * out.distances() - 1.7
    assert np.max(np.abs(out.values - expected)) < 1e-12


def test_idle_records_change_nothing():
    rng = np.random.default_rng(5)
    n = 300
    t = np.arange(n) * 0.02
    v = rng.uniform(1.0, 15.0, n)
    r = rng.normal(0.0, 0.01, n)
    base = convert_time_to_distance(profile_from(t, r, v), 0.1)

    # splice idle records (v=0) between every 50th pair
    ti, ri, vi = [], [], []
    for i in range(n):
        ti.append(t[i]); ri.append(r[i]); vi.append(v[i])
        if i % 50 == 10:
            ti.append(t[i] + 0.005); ri.append(99.0); vi.append(0.0)
    spliced = convert_time_to_distance(profile_from(ti, ri, vi), 0.1)
    assert np.array_equal(base.values, spliced.values)


def test_leading_idle_records_are_skipped():
    t = [0.0, 1.0, 1.5, 2.0]
    r = [5.0, 1.0, 2.0, 3.0]
    v = [0.0, 4.0, 4.0, 4.0]
    out = convert_time_to_distance(profile_from(t, r, v), 0.5)
    # motion starts at the first positive-speed record; first grid value is its height
    assert out.values[0] == 1.0


def test_grid_monotone_by_exact_spacing():
    t = np.arange(500) * 0.01
    v = np.full(500, 3.0)
    out = convert_time_to_distance(profile_from(t, np.zeros(500), v), 0.1)
    deltas = np.diff(out.distances())
    assert np.allclose(deltas, 0.1, atol=1e-12)


def test_interpolation_error_bound_for_smooth_signal():
    # max error <= (largest per-record advance)^2 * max|r''| / 8
    t = np.arange(0.0, 30.0, 0.02)
    v = np.full_like(t, 5.0)
    d = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(t))])
    k = 2.0 * np.pi / 7.0
    r = 0.05 * np.sin(k * d)
    out = convert_time_to_distance(profile_from(t, r, v), 0.1)
    truth = 0.05 * np.sin(k * out.distances())
    step = 5.0 * 0.02
    bound = step**2 * 0.05 * k**2 / 8.0
    assert np.max(np.abs(out.values - truth)) <= bound * 1.01


def test_too_short_raises():
    with pytest.raises(EmptyProfileError):
        convert_time_to_distance(profile_from([0.0, 0.01], [0, 0], [1.0, 1.0]), 0.5)


def test_all_idle_raises():
    with pytest.raises(EmptyProfileError):
        convert_time_to_distance(profile_from([0, 1, 2], [0, 0, 0], [0.0, 0.0, 0.0]), 0.1)


def test_negative_speed_rejected():
    with pytest.raises(ValueError):
        convert_time_to_distance(profile_from([0, 1], [0, 0], [1.0, -1.0]), 0.1)


class TestCrop:
    def make(self, n=1000):
        return DistanceProfile(np.arange(n, dtype=float), spacing=0.1)

    def test_full_crop_is_identity(self):
        p = self.make()
        out = crop(p, 0.0, p.length_m)
        assert np.array_equal(out.values, p.values)
        assert out.start_offset == p.start_offset

    def test_crop_composition(self):
        p = self.make()
        once = crop(p, 10.0, 50.0)
        twice = crop(once, 20.0, 30.0)
        direct = crop(p, 20.0, 30.0)
        assert np.array_equal(twice.values, direct.values)
        assert twice.start_offset == direct.start_offset

    def test_crop_index_arithmetic(self):
        p = self.make(1000)
        out = crop(p, 10.0, 50.0)
        assert len(out.values) == 500
        assert out.values[0] == p.values[100]
        assert out.start_offset == pytest.approx(10.0)

    def test_out_of_range(self):
        p = self.make(100)
        with pytest.raises(ValueError):
            crop(p, 5.0, 100.0)
        with pytest.raises(ValueError):
            crop(p, -1.0, 2.0)


def test_transformer_facade():
    t = np.arange(300) * 0.01
    tp = profile_from(t, np.sin(t), np.full(300, 10.0))
    out = TimeToDistanceResampler(spacing_m=0.1).fit().transform(tp)
    assert out.spacing == 0.1
    assert len(out.values) == 300


def test_units_tag_validation():
    with pytest.raises(ValueError):
        DistanceProfile(np.zeros(4), units="furlongs")
