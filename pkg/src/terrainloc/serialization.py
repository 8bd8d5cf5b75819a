"""Delimited-text file formats and atomic write helpers.

All numeric artifacts serialize to comma-delimited text in SI units; sensor
streams carry 9 significant digits. Writes go to a temp file first and are
renamed into place so readers never observe a partial file.
"""

from __future__ import annotations

import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .localizer import FixStatus, LocalizerUpdate
from .quarter_car import RoadInput, SensorStream
from .reconstruction import TimeProfile
from .resample import DistanceProfile
from .terrain_map import GpsTrace

STREAM_HEADER = "t,accel,sd,sv,f,v"
ROAD_HEADER = "distance,height"
TIME_PROFILE_HEADER = "t,r_hat,v"
GPS_TRACE_HEADER = "distance,lat,lon"
ESTIMATE_LOG_HEADER = "travel_distance,estimate,status,ratio"


@contextmanager
def atomic_write(path, mode: str = "w"):
    """Write to a sibling temp file, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_bytes(path, payload: bytes) -> None:
    with atomic_write(path, "wb") as fh:
        fh.write(payload)


def _write_table(fh, header: str, columns, fmt: str = "%.9g") -> None:
    fh.write(header + "\n")
    arr = np.column_stack(columns)
    np.savetxt(fh, arr, fmt=fmt, delimiter=",")


def _read_table(path, header: str) -> np.ndarray:
    with open(path) as fh:
        first = fh.readline().strip()
        while first.startswith("#"):
            first = fh.readline().strip()
        if first != header:
            raise ValueError(f"{path}: expected header {header!r}, got {first!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return data


def write_sensor_stream(path, stream: SensorStream) -> None:
    with atomic_write(path) as fh:
        _write_table(
            fh,
            STREAM_HEADER,
            (
                stream.time,
                stream.wheel_accel,
                stream.shock_disp,
                stream.shock_vel,
                stream.force,
                stream.speed,
            ),
        )


def read_sensor_stream(path) -> SensorStream:
    data = _read_table(path, STREAM_HEADER)
    if data.shape[1] != 6:
        raise ValueError(f"{path}: sensor stream needs 6 columns")
    return SensorStream(
        time=data[:, 0],
        wheel_accel=data[:, 1],
        shock_disp=data[:, 2],
        shock_vel=data[:, 3],
        force=data[:, 4],
        speed=data[:, 5],
    )


def write_road(path, road: RoadInput) -> None:
    distances = np.arange(len(road.heights)) * road.spacing
    with atomic_write(path) as fh:
        fh.write(f"# spacing={road.spacing:.9g} loop={int(road.loop)}\n")
        _write_table(fh, ROAD_HEADER, (distances, road.heights), fmt="%.12g")


def read_road(path) -> RoadInput:
    spacing = None
    loop = False
    with open(path) as fh:
        first = fh.readline().strip()
        if first.startswith("#"):
            for token in first[1:].split():
                key, _, value = token.partition("=")
                if key == "spacing":
                    spacing = float(value)
                elif key == "loop":
                    loop = bool(int(value))
    data = _read_table(path, ROAD_HEADER)
    if spacing is None:
        spacing = float(np.median(np.diff(data[:, 0])))
    return RoadInput(heights=data[:, 1], spacing=spacing, loop=loop)


def write_time_profile(path, profile: TimeProfile) -> None:
    with atomic_write(path) as fh:
        meta = " ".join(f"{k}={v}" for k, v in sorted(profile.meta.items()))
        fh.write(f"# transient_until={profile.transient_until:.9g} {meta}".rstrip() + "\n")
        _write_table(fh, TIME_PROFILE_HEADER, (profile.time, profile.height, profile.speed))


def read_time_profile(path) -> TimeProfile:
    transient = 0.0
    with open(path) as fh:
        first = fh.readline().strip()
        if first.startswith("#"):
            for token in first[1:].split():
                key, _, value = token.partition("=")
                if key == "transient_until":
                    transient = float(value)
    data = _read_table(path, TIME_PROFILE_HEADER)
    return TimeProfile(
        time=data[:, 0], height=data[:, 1], speed=data[:, 2], transient_until=transient
    )


def write_distance_profile(path, profile: DistanceProfile) -> None:
    with atomic_write(path) as fh:
        fh.write(
            f"{profile.start_offset:.12g},{profile.spacing:.12g},"
            f"{len(profile.values)},{profile.units}\n"
        )
        np.savetxt(fh, profile.values, fmt="%.12g")


def read_distance_profile(path) -> DistanceProfile:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if len(header) != 4:
            raise ValueError(f"{path}: bad distance-profile header")
        start, spacing, count, units = header
        values = np.loadtxt(fh, ndmin=1)
    if len(values) != int(count):
        raise ValueError(f"{path}: expected {count} values, found {len(values)}")
    return DistanceProfile(
        values, spacing=float(spacing), start_offset=float(start), units=units
    )


def write_gps_trace(path, trace: GpsTrace) -> None:
    with atomic_write(path) as fh:
        _write_table(
            fh,
            GPS_TRACE_HEADER,
            (trace.distances, trace.latitudes, trace.longitudes),
            fmt="%.12g",
        )


def read_gps_trace(path) -> GpsTrace:
    data = _read_table(path, GPS_TRACE_HEADER)
    return GpsTrace(
        distances=data[:, 0], latitudes=data[:, 1], longitudes=data[:, 2]
    )


def write_estimate_log(path, updates) -> None:
    with atomic_write(path) as fh:
        fh.write(ESTIMATE_LOG_HEADER + "\n")
        for u in updates:
            ratio = "nan" if u.ratio is None else f"{u.ratio:.9g}"
            fh.write(
                f"{u.travel_distance:.9g},{u.estimate:.9g},{u.status.value},{ratio}\n"
            )


def read_estimate_log(path) -> list[LocalizerUpdate]:
    updates = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != ESTIMATE_LOG_HEADER:
            raise ValueError(f"{path}: bad estimate log header")
        for line in fh:
            d, est, status, ratio = line.strip().split(",")
            r = float(ratio)
            updates.append(
                LocalizerUpdate(
                    travel_distance=float(d),
                    estimate=float(est),
                    status=FixStatus(status),
                    ratio=None if np.isnan(r) else r,
                )
            )
    return updates


def write_error_cdf(path, summary) -> None:
    errors, fractions = summary.cdf()
    with atomic_write(path) as fh:
        for thr, frac in sorted(summary.fractions.items()):
            fh.write(f"# fraction_below_{thr:g}m={frac:.6g}\n")
        _write_table(fh, "error,cum_fraction", (errors, fractions), fmt="%.9g")


def write_correlation_snapshot(path, route_positions, values) -> None:
    with atomic_write(path) as fh:
        _write_table(fh, "route_position,correlation", (route_positions, values))
