"""Crowd-sourced terrain map: graph geometry, stretch matching, weighted merging.

The map couples a graph of nodes and straight segments (geometry known a
priori, heights unknown) with a master height profile at 0.1 m resolution.
Live profiles arrive one drive at a time, are cut into ~100 m stretches,
precisely aligned by cross-correlating twice-differentiated pitch, and merged
into the master by a weighted per-cell average.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .matching import (
    DEFAULT_EXCLUSION_HALFWIDTH,
    DEFAULT_RATIO_THRESHOLD,
    locate_snippet,
)
from .pitch import VehicleGeometry, matching_signal
from .resample import DEFAULT_SPACING_M, DistanceProfile
from .validation import as_float_array, check_positive

EARTH_RADIUS_M = 6_371_000.0
DEFAULT_STRETCH_LENGTH_M = 100.0
MIN_STRETCH_LENGTH_M = 50.0
MAX_STRETCH_LENGTH_M = 150.0
DEFAULT_EXTENSION_MARGIN_M = 50.0
DEFAULT_WEIGHT_CAP = 32
DEFAULT_GPS_OFFSET_DAMPING = 0.25
PROJECTION_MAX_DISTANCE_M = 100.0

MAP_MAGIC = b"TMAP"
MAP_VERSION = 1


class MapFormatError(ValueError):
    """Map file is corrupt, truncated, or has an unsupported version."""


class GpsProjectionError(ValueError):
    """A GPS point is too far from every segment."""


@dataclass(frozen=True)
class GpsPoint:
    latitude: float
    longitude: float
    noise_std_m: Optional[float] = None  # populated for synthetic traces

    def __post_init__(self):
        if not (abs(self.latitude) <= 90.0 and abs(self.longitude) <= 180.0):
            raise ValueError("latitude/longitude out of range")


@dataclass(frozen=True)
class MapNode:
    node_id: int
    latitude: float
    longitude: float


@dataclass(frozen=True)
class MapSegment:
    start_node: int
    end_node: int
    length_m: float


class GraphMap:
    """Nodes plus an ordered chain of straight segments (the driving route).

    All geometry runs through a local equirectangular plane centered at the
    node centroid; at loop scale (< 10 km) the projection error is
    negligible.
    """

    def __init__(self, nodes: Sequence[MapNode], segments: Sequence[MapSegment]):
        self.nodes = list(nodes)
        self.segments = list(segments)
        if not self.nodes or not self.segments:
            raise ValueError("map needs at least one node and one segment")
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("node ids must be unique")
        self._node_by_id = {n.node_id: n for n in self.nodes}
        for seg in self.segments:
            if seg.start_node not in self._node_by_id or seg.end_node not in self._node_by_id:
                raise ValueError("segment endpoint references a missing node")
        for a, b in zip(self.segments[:-1], self.segments[1:]):
            if a.end_node != b.start_node:
                raise ValueError("segments must form a connected chain")
        self.loop = self.segments[-1].end_node == self.segments[0].start_node

        lat0 = math.radians(np.mean([n.latitude for n in self.nodes]))
        self._origin_lat = float(np.mean([n.latitude for n in self.nodes]))
        self._origin_lon = float(np.mean([n.longitude for n in self.nodes]))
        self._meters_per_deg_lat = EARTH_RADIUS_M * math.pi / 180.0
        self._meters_per_deg_lon = self._meters_per_deg_lat * math.cos(lat0)

        self._node_xy = {
            n.node_id: self.to_plane(GpsPoint(n.latitude, n.longitude))
            for n in self.nodes
        }
        for i, seg in enumerate(self.segments):
            planar = self.segment_planar_length(i)
            if abs(planar - seg.length_m) > 0.01 * seg.length_m:
                raise ValueError(
                    f"segment {i} declared length {seg.length_m:.2f} m differs from "
                    f"node geometry ({planar:.2f} m) by more than 1%"
                )

    def to_plane(self, point: GpsPoint) -> np.ndarray:
        return np.array(
            [
                (point.longitude - self._origin_lon) * self._meters_per_deg_lon,
                (point.latitude - self._origin_lat) * self._meters_per_deg_lat,
            ]
        )

    def from_plane(self, xy) -> GpsPoint:
        return GpsPoint(
            latitude=self._origin_lat + xy[1] / self._meters_per_deg_lat,
            longitude=self._origin_lon + xy[0] / self._meters_per_deg_lon,
        )

    def segment_endpoints_xy(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        seg = self.segments[index]
        return self._node_xy[seg.start_node], self._node_xy[seg.end_node]

    def segment_planar_length(self, index: int) -> float:
        a, b = self.segment_endpoints_xy(index)
        return float(np.linalg.norm(b - a))

    @property
    def total_length_m(self) -> float:
        return float(sum(s.length_m for s in self.segments))


def project_gps(
    point: GpsPoint,
    graph: GraphMap,
    max_distance_m: float = PROJECTION_MAX_DISTANCE_M,
) -> tuple[int, float]:
    """Orthogonal projection onto the nearest segment.

    Returns (segment index, arc-length offset from the segment start node).
    Ties break toward the lower segment index; a point farther than
    ``max_distance_m`` from every segment raises GpsProjectionError.
    """
    p = graph.to_plane(point)
    best = None
    for i in range(len(graph.segments)):
        a, b = graph.segment_endpoints_xy(i)
        ab = b - a
        denom = float(ab @ ab)
        t = 0.0 if denom == 0.0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
        dist = float(np.linalg.norm(p - (a + t * ab)))
        if best is None or dist < best[0] - 1e-12:
            best = (dist, i, t * graph.segments[i].length_m)
    dist, index, offset = best
    if dist > max_distance_m:
        raise GpsProjectionError(
            f"point is {dist:.1f} m from the nearest segment (limit {max_distance_m} m)"
        )
    return index, offset


@dataclass
class GpsTrace:
    """GPS fixes keyed by the traveled distance at which they were taken."""

    distances: np.ndarray
    latitudes: np.ndarray
    longitudes: np.ndarray

    def __post_init__(self):
        self.distances = as_float_array(self.distances, "distances")
        self.latitudes = as_float_array(self.latitudes, "latitudes")
        self.longitudes = as_float_array(self.longitudes, "longitudes")
        if not (len(self.distances) == len(self.latitudes) == len(self.longitudes)):
            raise ValueError("trace column lengths differ")
        if len(self.distances) < 2:
            raise ValueError("trace needs at least two fixes")
        if np.any(np.diff(self.distances) < 0.0):
            raise ValueError("trace distances must be non-decreasing")

    def interpolate(self, distance: float) -> GpsPoint:
        lat = float(np.interp(distance, self.distances, self.latitudes))
        lon = float(np.interp(distance, self.distances, self.longitudes))
        return GpsPoint(lat, lon)

    def covers(self, start: float, end: float, slack_m: float = 20.0) -> bool:
        return (
            self.distances[0] - slack_m <= start
            and end <= self.distances[-1] + slack_m
        )


@dataclass
class Stretch:
    """A ~100 m slice of a live profile; the unit of map merging."""

    profile: DistanceProfile
    start_gps: GpsPoint
    center_gps: GpsPoint
    end_gps: GpsPoint
    run_id: str = ""

    def __post_init__(self):
        length = self.profile.length_m
        if not (MIN_STRETCH_LENGTH_M - 1.0 <= length <= MAX_STRETCH_LENGTH_M):
            raise ValueError(
                f"stretch length {length:.1f} m outside the allowed band"
            )


def extract_stretches(
    live: DistanceProfile,
    gps_trace: GpsTrace,
    stretch_length_m: float = DEFAULT_STRETCH_LENGTH_M,
    min_length_m: float = MIN_STRETCH_LENGTH_M,
    run_id: str = "",
) -> list[Stretch]:
    """Cut a live profile into consecutive non-overlapping stretches.

    A trailing piece shorter than ``min_length_m`` is dropped. GPS anchors
    are interpolated from the trace at each slice's start/center/end.
    """
    if not gps_trace.covers(live.start_offset, live.end_offset):
        raise ValueError("gps trace does not cover the profile extent")
    cells_per = int(round(stretch_length_m / live.spacing))
    min_cells = int(round(min_length_m / live.spacing))
    n = len(live.values)
    stretches: list[Stretch] = []
    i = 0
    while n - i >= cells_per:
        stretches.append(_make_stretch(live, gps_trace, i, cells_per, run_id))
        i += cells_per
    if n - i >= min_cells:
        stretches.append(_make_stretch(live, gps_trace, i, n - i, run_id))
    return stretches


def _make_stretch(live, trace, i0, n_cells, run_id) -> Stretch:
    profile = DistanceProfile(
        live.values[i0 : i0 + n_cells].copy(),
        spacing=live.spacing,
        start_offset=live.start_offset + i0 * live.spacing,
        units=live.units,
    )
    start_d = profile.start_offset
    end_d = profile.end_offset
    return Stretch(
        profile=profile,
        start_gps=trace.interpolate(start_d),
        center_gps=trace.interpolate(0.5 * (start_d + end_d)),
        end_gps=trace.interpolate(end_d),
        run_id=run_id,
    )


class MasterProfile:
    """Weighted master height cells on the route axis of a graph map.

    The route axis concatenates the segments of the graph chain; segment i
    owns ``cells_per_segment[i]`` cells of ``spacing`` meters each. A weight
    of zero marks an uninitialized cell. ``gps_offsets`` holds the learned
    per-segment correction applied to GPS projections when placing stretches
    (it never moves stored cells).
    """

    def __init__(
        self,
        graph: GraphMap,
        spacing: float = DEFAULT_SPACING_M,
        weight_cap: int = DEFAULT_WEIGHT_CAP,
    ):
        self.graph = graph
        self.spacing = check_positive(spacing, "spacing")
        self.weight_cap = int(weight_cap)
        if self.weight_cap < 1:
            raise ValueError("weight_cap must be >= 1")
        self.cells_per_segment = np.array(
            [int(round(s.length_m / spacing)) for s in graph.segments], dtype=np.int64
        )
        if np.any(self.cells_per_segment < 1):
            raise ValueError("every segment must span at least one cell")
        self.segment_start_cell = np.concatenate(
            [[0], np.cumsum(self.cells_per_segment)[:-1]]
        )
        n = int(self.cells_per_segment.sum())
        self.values = np.zeros(n)
        self.weights = np.zeros(n)
        self.gps_offsets = np.zeros(len(graph.segments))

    @property
    def n_cells(self) -> int:
        return len(self.values)

    @property
    def loop(self) -> bool:
        return self.graph.loop

    @property
    def route_length_m(self) -> float:
        return self.n_cells * self.spacing

    def segment_slice(self, index: int) -> slice:
        start = int(self.segment_start_cell[index])
        return slice(start, start + int(self.cells_per_segment[index]))

    def segment_of_cell(self, cell: int) -> int:
        cell = cell % self.n_cells if self.loop else cell
        return int(np.searchsorted(self.segment_start_cell, cell, side="right") - 1)

    def route_position(self, segment_index: int, offset_m: float) -> float:
        """Route position of an arc-length offset on a segment."""
        seg_cells = float(self.cells_per_segment[segment_index])
        seg_len = self.graph.segments[segment_index].length_m
        frac = np.clip(offset_m / seg_len, 0.0, 1.0)
        return (self.segment_start_cell[segment_index] + frac * seg_cells) * self.spacing

    def project_to_route(self, point: GpsPoint, apply_offset: bool = True) -> float:
        seg, offset = project_gps(point, self.graph)
        pos = self.route_position(seg, offset)
        if apply_offset:
            pos += self.gps_offsets[seg]
        return pos

    def cell_indices(self, start_cell: int, n: int) -> np.ndarray:
        idx = start_cell + np.arange(n)
        if self.loop:
            return np.mod(idx, self.n_cells)
        if start_cell < 0 or start_cell + n > self.n_cells:
            raise ValueError("cell window outside the (open) route")
        return idx

    def extract_window(self, start_m: float, length_m: float):
        """Heights and weights over [start_m, start_m + length_m), wrap-aware.

        Returns (values, weights, start_cell).
        """
        start_cell = int(round(start_m / self.spacing))
        n = int(round(length_m / self.spacing))
        idx = self.cell_indices(start_cell, n)
        return self.values[idx].copy(), self.weights[idx].copy(), start_cell

    def initialized_fraction(self, start_cell: int, n: int) -> float:
        idx = self.cell_indices(start_cell, n)
        return float(np.mean(self.weights[idx] > 0.0))


class MatchStatus(Enum):
    MATCHED = "MATCHED"
    BOOTSTRAP = "BOOTSTRAP"
    NO_MATCH = "NO_MATCH"


@dataclass
class StretchMatch:
    status: MatchStatus
    start_cell: Optional[int] = None  # route cell of the stretch's first sample
    n_cells: int = 0
    ratio: Optional[float] = None
    gps_discrepancy_m: Optional[float] = None  # GPS-implied minus matched center
    center_segment: Optional[int] = None


def match_stretch(
    stretch: Stretch,
    graph: GraphMap,
    master: MasterProfile,
    geometry: VehicleGeometry,
    margin_m: float = DEFAULT_EXTENSION_MARGIN_M,
    ratio_threshold: float = DEFAULT_RATIO_THRESHOLD,
    exclusion_halfwidth: int = DEFAULT_EXCLUSION_HALFWIDTH,
) -> StretchMatch:
    """Locate a stretch inside the master profile near its GPS center.

    An extended stretch (the stretch span plus ``margin_m`` on both sides,
    stitched across segment boundaries) is pulled from the master, both
    sides are reduced to twice-differentiated pitch, and the raw correlation
    peak must be unambiguous (ratio below threshold) to count as a match.
    A mostly-uninitialized extended stretch signals bootstrap mode instead.
    """
    dd = master.spacing
    center = master.project_to_route(stretch.center_gps)
    center_segment = master.segment_of_cell(int(round(center / dd)))
    half = 0.5 * stretch.profile.length_m
    ext_start = center - half - margin_m
    ext_len = 2.0 * (half + margin_m)
    if not master.loop:
        ext_start = max(0.0, ext_start)
        ext_len = min(ext_len, master.route_length_m - ext_start)

    # bootstrap when the region the stretch itself would occupy is still
    # mostly unwritten; correlating against zeros is meaningless there
    central_start = int(round((center - half) / dd))
    central_n = max(int(round(2.0 * half / dd)), 1)
    if not master.loop:
        central_start = max(0, min(central_start, master.n_cells - central_n))
    if master.initialized_fraction(central_start, central_n) < 0.7:
        return StretchMatch(
            status=MatchStatus.BOOTSTRAP,
            n_cells=len(stretch.profile.values),
            center_segment=center_segment,
        )

    values, weights, start_cell = master.extract_window(ext_start, ext_len)

    window = DistanceProfile(values, spacing=dd, start_offset=start_cell * dd, units="m")
    window_sig = matching_signal(window, geometry)
    stretch_sig = matching_signal(stretch.profile, geometry)
    if len(stretch_sig.values) > len(window_sig.values):
        return StretchMatch(
            status=MatchStatus.NO_MATCH,
            n_cells=len(stretch.profile.values),
            center_segment=center_segment,
        )

    result = locate_snippet(
        stretch_sig.values, window_sig.values, exclusion_halfwidth=exclusion_halfwidth
    )
    if not result.accepted(ratio_threshold):
        return StretchMatch(
            status=MatchStatus.NO_MATCH,
            ratio=result.ratio,
            n_cells=len(stretch.profile.values),
            center_segment=center_segment,
        )

    # the signal head trim is identical on both sides, so the lag between the
    # signals equals the lag between the underlying height arrays
    matched_start_cell = start_cell + result.best_lag
    n_cells = len(stretch.profile.values)
    matched_center = (matched_start_cell + 0.5 * (n_cells - 1)) * dd
    return StretchMatch(
        status=MatchStatus.MATCHED,
        start_cell=matched_start_cell,
        n_cells=n_cells,
        ratio=result.ratio,
        gps_discrepancy_m=center - matched_center,
        center_segment=master.segment_of_cell(
            int(round(matched_center / dd)) % master.n_cells
            if master.loop
            else int(round(matched_center / dd))
        ),
    )


def merge_stretch(
    stretch: Stretch,
    match: StretchMatch,
    master: MasterProfile,
    gps_offset_damping: float = DEFAULT_GPS_OFFSET_DAMPING,
) -> MasterProfile:
    """Fold a stretch into the master by a per-cell weighted mean.

    Each cell update is value <- (w*value + live) / (w + 1) with the weight
    capped so the map stays adaptive to slow road changes. For matched
    stretches the segment's GPS anchoring offset is nudged by a damped
    fraction of the observed GPS-vs-correlation discrepancy.
    """
    if match.start_cell is None:
        raise ValueError("merge requires a placed interval (matched or bootstrap)")
    live = stretch.profile.values
    if match.n_cells != len(live):
        raise ValueError("matched interval length does not equal the stretch length")
    idx = master.cell_indices(match.start_cell, match.n_cells)
    w = master.weights[idx]
    w_used = np.minimum(w, float(master.weight_cap))
    master.values[idx] = (w_used * master.values[idx] + live) / (w_used + 1.0)
    master.weights[idx] = np.minimum(w + 1.0, float(master.weight_cap))

    if (
        match.status is MatchStatus.MATCHED
        and match.gps_discrepancy_m is not None
        and match.center_segment is not None
    ):
        master.gps_offsets[match.center_segment] -= (
            gps_offset_damping * match.gps_discrepancy_m
        )
    return master


def bootstrap_match(
    stretch: Stretch, master: MasterProfile, route_start_m: float
) -> StretchMatch:
    """Placement for a first-pass stretch: trust the (pass-level) GPS fit."""
    start_cell = int(round(route_start_m / master.spacing))
    if not master.loop:
        start_cell = min(
            max(start_cell, 0), master.n_cells - len(stretch.profile.values)
        )
    return StretchMatch(
        status=MatchStatus.BOOTSTRAP,
        start_cell=start_cell,
        n_cells=len(stretch.profile.values),
        center_segment=master.segment_of_cell(
            (start_cell + len(stretch.profile.values) // 2)
            % max(master.n_cells, 1)
        ),
    )


def estimate_pass_offset(gps_trace: GpsTrace, master: MasterProfile) -> float:
    """Single rigid offset mapping a pass's travel axis onto the route axis.

    Each trace fix is projected onto the route; the median of the wrapped
    (projection - travel distance) differences is returned. Using one offset
    per pass preserves the live profile's internally rigid distance axis and
    averages the per-fix GPS error down by sqrt(N).
    """
    route_len = master.route_length_m
    diffs = []
    for i in range(len(gps_trace.distances)):
        point = GpsPoint(float(gps_trace.latitudes[i]), float(gps_trace.longitudes[i]))
        try:
            pos = master.project_to_route(point)
        except GpsProjectionError:
            continue
        diffs.append(pos - gps_trace.distances[i])
    if not diffs:
        raise GpsProjectionError("no trace fix projects onto the map")
    diffs = np.array(diffs)
    if master.loop:
        ref = diffs[0]
        diffs = np.mod(diffs - ref + 0.5 * route_len, route_len) - 0.5 * route_len + ref
        offset = float(np.median(diffs))
        # report the representative nearest zero; placement is modular anyway
        return float(np.mod(offset + 0.5 * route_len, route_len) - 0.5 * route_len)
    return float(np.median(diffs))


@dataclass
class MergeReport:
    """Per-pass summary of how its stretches entered the map."""

    run_id: str
    pass_offset_m: float
    n_bootstrap: int = 0
    n_matched: int = 0
    n_quarantined: int = 0
    ratios: list = field(default_factory=list)

    @property
    def n_stretches(self) -> int:
        return self.n_bootstrap + self.n_matched + self.n_quarantined


@dataclass
class TerrainMap:
    """Persistable bundle of graph geometry and the master profile."""

    graph: GraphMap
    master: MasterProfile

    @property
    def spacing(self) -> float:
        return self.master.spacing

    @property
    def route_length_m(self) -> float:
        return self.master.route_length_m


def ingest_pass(
    terrain_map: TerrainMap,
    live: DistanceProfile,
    gps_trace: GpsTrace,
    geometry: VehicleGeometry,
    run_id: str = "",
    stretch_length_m: float = DEFAULT_STRETCH_LENGTH_M,
    margin_m: float = DEFAULT_EXTENSION_MARGIN_M,
    ratio_threshold: float = DEFAULT_RATIO_THRESHOLD,
    exclusion_halfwidth: int = DEFAULT_EXCLUSION_HALFWIDTH,
    gps_offset_damping: float = DEFAULT_GPS_OFFSET_DAMPING,
) -> MergeReport:
    """Run one live pass through extract -> match -> merge (Algorithm-2 flow).

    Stretches over uninitialized regions are bootstrap-placed with the
    pass-level GPS offset; ambiguous matches are quarantined (skipped and
    counted), never merged.
    """
    master = terrain_map.master
    stretches = extract_stretches(
        live, gps_trace, stretch_length_m=stretch_length_m, run_id=run_id
    )
    pass_offset = estimate_pass_offset(gps_trace, master)
    report = MergeReport(run_id=run_id, pass_offset_m=pass_offset)
    for stretch in stretches:
        match = match_stretch(
            stretch,
            terrain_map.graph,
            master,
            geometry,
            margin_m=margin_m,
            ratio_threshold=ratio_threshold,
            exclusion_halfwidth=exclusion_halfwidth,
        )
        if match.status is MatchStatus.NO_MATCH:
            report.n_quarantined += 1
            if match.ratio is not None:
                report.ratios.append(match.ratio)
            continue
        if match.status is MatchStatus.BOOTSTRAP:
            match = bootstrap_match(
                stretch, master, stretch.profile.start_offset + pass_offset
            )
            report.n_bootstrap += 1
        else:
            report.n_matched += 1
            report.ratios.append(match.ratio)
        merge_stretch(stretch, match, master, gps_offset_damping=gps_offset_damping)
    return report


class TerrainMapBuilder(BaseEstimator):
    """sklearn-style builder: fit on live passes, expose the map as ``map_``.

    Each pass is a (height profile, gps trace, run id) triple;
    ``partial_fit`` supports the crowd-sourced one-pass-at-a-time flow.
    """

    def __init__(
        self,
        graph: GraphMap,
        spacing_m: float = DEFAULT_SPACING_M,
        stretch_length_m: float = DEFAULT_STRETCH_LENGTH_M,
        extension_margin_m: float = DEFAULT_EXTENSION_MARGIN_M,
        ratio_threshold: float = DEFAULT_RATIO_THRESHOLD,
        exclusion_halfwidth: int = DEFAULT_EXCLUSION_HALFWIDTH,
        weight_cap: int = DEFAULT_WEIGHT_CAP,
        gps_offset_damping: float = DEFAULT_GPS_OFFSET_DAMPING,
        wheelbase_m: float = VehicleGeometry().wheelbase,
    ):
        self.graph = graph
        self.spacing_m = spacing_m
        self.stretch_length_m = stretch_length_m
        self.extension_margin_m = extension_margin_m
        self.ratio_threshold = ratio_threshold
        self.exclusion_halfwidth = exclusion_halfwidth
        self.weight_cap = weight_cap
        self.gps_offset_damping = gps_offset_damping
        self.wheelbase_m = wheelbase_m

    def _ensure_map(self):
        if not hasattr(self, "map_"):
            self.map_ = TerrainMap(
                graph=self.graph,
                master=MasterProfile(
                    self.graph, spacing=self.spacing_m, weight_cap=self.weight_cap
                ),
            )
            self.reports_ = []

    def partial_fit(self, live: DistanceProfile, gps_trace: GpsTrace, run_id: str = ""):
        self._ensure_map()
        report = ingest_pass(
            self.map_,
            live,
            gps_trace,
            VehicleGeometry(self.wheelbase_m),
            run_id=run_id,
            stretch_length_m=self.stretch_length_m,
            margin_m=self.extension_margin_m,
            ratio_threshold=self.ratio_threshold,
            exclusion_halfwidth=self.exclusion_halfwidth,
            gps_offset_damping=self.gps_offset_damping,
        )
        self.reports_.append(report)
        return self

    def fit(self, passes, y=None):
        for i, item in enumerate(passes):
            live, trace = item[0], item[1]
            run_id = item[2] if len(item) > 2 else f"pass-{i + 1}"
            self.partial_fit(live, trace, run_id=run_id)
        return self


def save_map(terrain_map: TerrainMap, path) -> None:
    """Versioned binary container with a whole-file checksum; bit-exact."""
    master = terrain_map.master
    header = {
        "version": MAP_VERSION,
        "spacing_m": master.spacing,
        "weight_cap": master.weight_cap,
        "nodes": [
            [n.node_id, n.latitude, n.longitude] for n in terrain_map.graph.nodes
        ],
        "segments": [
            [s.start_node, s.end_node, s.length_m] for s in terrain_map.graph.segments
        ],
        "gps_offsets": master.gps_offsets.tolist(),
        "n_cells": master.n_cells,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = (
        MAP_MAGIC
        + struct.pack("<II", MAP_VERSION, len(header_bytes))
        + header_bytes
        + master.values.astype("<f8").tobytes()
        + master.weights.astype("<f8").tobytes()
    )
    digest = hashlib.sha256(payload).digest()
    from .serialization import atomic_write_bytes

    atomic_write_bytes(path, payload + digest)


def load_map(path) -> TerrainMap:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAP_MAGIC) + 8 + 32 or blob[: len(MAP_MAGIC)] != MAP_MAGIC:
        raise MapFormatError("not a terrain map file")
    payload, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise MapFormatError("checksum mismatch (file corrupt or truncated)")
    version, header_len = struct.unpack_from("<II", payload, len(MAP_MAGIC))
    if version != MAP_VERSION:
        raise MapFormatError(f"unsupported map version {version}")
    ofs = len(MAP_MAGIC) + 8
    header = json.loads(payload[ofs : ofs + header_len].decode("utf-8"))
    ofs += header_len

    nodes = [MapNode(int(n[0]), float(n[1]), float(n[2])) for n in header["nodes"]]
    segments = [
        MapSegment(int(s[0]), int(s[1]), float(s[2])) for s in header["segments"]
    ]
    graph = GraphMap(nodes, segments)
    master = MasterProfile(
        graph, spacing=float(header["spacing_m"]), weight_cap=int(header["weight_cap"])
    )
    n = int(header["n_cells"])
    if master.n_cells != n:
        raise MapFormatError("cell count does not match the graph geometry")
    need = 2 * n * 8
    if len(payload) - ofs != need:
        raise MapFormatError("payload size mismatch (file corrupt or truncated)")
    master.values = np.frombuffer(payload[ofs : ofs + n * 8], dtype="<f8").copy()
    master.weights = np.frombuffer(
        payload[ofs + n * 8 : ofs + need], dtype="<f8"
    ).copy()
    master.gps_offsets = np.array(header["gps_offsets"], dtype=np.float64)
    return TerrainMap(graph=graph, master=master)
