"""Synthetic end-to-end scenarios: loop road, repeated passes, full pipeline.

The default configuration reproduces the reference experiment: a 4.2 km loop
driven three times to build the map plus one live pass for localization,
with fresh sensor noise per pass and noisy GPS anchoring.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .localizer import Localizer, LocalizerConfig, LocalizerUpdate
from .pitch import CornerProfiles, VehicleGeometry, combine_corner_heights
from .quarter_car import (
    NoiseConfig,
    QuarterCarParams,
    RoadInput,
    SensorStream,
    generate_road,
    simulate_run,
)
from .reconstruction import ReconstructionConfig, estimate_road_profile
from .resample import DistanceProfile, convert_time_to_distance, crop_cells
from .terrain_map import (
    GpsPoint,
    GpsTrace,
    GraphMap,
    MapNode,
    MapSegment,
    MergeReport,
    TerrainMap,
    TerrainMapBuilder,
)

CORNERS = ("fl", "fr", "rl", "rr")


@dataclass
class ScenarioConfig:
    """Everything needed to run the reference scenario, units in the names."""

    seed: int = 0
    # road + graph geometry
    road_length_m: float = 4200.0
    road_spacing_m: float = 0.05
    roughness_class: str = "C"
    segment_count: int = 21
    center_latitude_deg: float = 42.0
    center_longitude_deg: float = -71.0
    # vehicle
    body_mass_kg: float = 400.0
    wheel_mass_kg: float = 50.0
    spring_rate_n_per_m: float = 2.0e4
    tire_rate_n_per_m: float = 2.0e5
    damping_n_s_per_m: float = 1.5e3
    wheelbase_m: float = 2.968
    # drive
    speed_mps: float = 10.0
    sim_dt_s: float = 0.001
    pass_overlap_m: float = 400.0
    map_passes: int = 3
    # sensor + gps noise
    accel_noise_std_mps2: float = 0.05
    shock_disp_noise_std_m: float = 5.0e-4
    shock_vel_noise_std_mps: float = 5.0e-3
    force_noise_std_n: float = 0.0
    speed_noise_std_mps: float = 0.0
    gps_noise_std_m: float = 3.0
    gps_period_s: float = 1.0
    # reconstruction + map
    highpass_cutoff_hz: float = 0.5
    map_spacing_m: float = 0.1
    stretch_length_m: float = 100.0
    extension_margin_m: float = 50.0
    match_ratio_threshold: float = 0.6
    exclusion_halfwidth_cells: int = 10
    weight_cap: int = 32
    gps_offset_damping: float = 0.25
    # localizer
    buffer_length_m: float = 100.0
    window_length_m: float = 1000.0
    subbuffer_length_m: float = 30.0
    subwindow_length_m: float = 100.0
    update_stride_m: float = 1.0
    dr_distance_limit_m: float = 500.0

    def vehicle_params(self) -> QuarterCarParams:
        return QuarterCarParams(
            body_mass=self.body_mass_kg,
            wheel_mass=self.wheel_mass_kg,
            spring_rate=self.spring_rate_n_per_m,
            tire_rate=self.tire_rate_n_per_m,
            damping_coefficient=self.damping_n_s_per_m,
        )

    def geometry(self) -> VehicleGeometry:
        return VehicleGeometry(wheelbase=self.wheelbase_m)

    def noise(self) -> NoiseConfig:
        return NoiseConfig(
            accel_std=self.accel_noise_std_mps2,
            shock_disp_std=self.shock_disp_noise_std_m,
            shock_vel_std=self.shock_vel_noise_std_mps,
            force_std=self.force_noise_std_n,
            speed_std=self.speed_noise_std_mps,
        )

    def reconstruction_config(self) -> ReconstructionConfig:
        return ReconstructionConfig(
            params=self.vehicle_params(), highpass_cutoff_hz=self.highpass_cutoff_hz
        )

    def localizer_config(self) -> LocalizerConfig:
        return LocalizerConfig(
            buffer_length_m=self.buffer_length_m,
            window_length_m=self.window_length_m,
            subbuffer_length_m=self.subbuffer_length_m,
            subwindow_length_m=self.subwindow_length_m,
            ratio_threshold=self.match_ratio_threshold,
            update_stride_m=self.update_stride_m,
            exclusion_halfwidth=self.exclusion_halfwidth_cells,
            dr_distance_limit_m=self.dr_distance_limit_m,
        )

    def noiseless(self) -> "ScenarioConfig":
        """Variant with every error source switched off."""
        return replace(
            self,
            accel_noise_std_mps2=0.0,
            shock_disp_noise_std_m=0.0,
            shock_vel_noise_std_mps=0.0,
            force_noise_std_n=0.0,
            speed_noise_std_mps=0.0,
            gps_noise_std_m=0.0,
        )

    def to_yaml(self, path) -> None:
        from .serialization import atomic_write

        with atomic_write(path) as fh:
            yaml.safe_dump(asdict(self), fh, sort_keys=True)

    @classmethod
    def from_yaml(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def make_loop_graph(
    route_length_m: float,
    segment_count: int,
    center_latitude_deg: float = 42.0,
    center_longitude_deg: float = -71.0,
) -> GraphMap:
    """Regular polygon loop whose perimeter equals ``route_length_m``."""
    if segment_count < 3:
        raise ValueError("a loop needs at least 3 segments")
    chord = route_length_m / segment_count
    radius = chord / (2.0 * np.sin(np.pi / segment_count))
    meters_per_deg_lat = 6_371_000.0 * np.pi / 180.0
    meters_per_deg_lon = meters_per_deg_lat * np.cos(np.radians(center_latitude_deg))
    nodes = []
    for i in range(segment_count):
        theta = 2.0 * np.pi * i / segment_count
        x, y = radius * np.cos(theta), radius * np.sin(theta)
        nodes.append(
            MapNode(
                node_id=i,
                latitude=center_latitude_deg + y / meters_per_deg_lat,
                longitude=center_longitude_deg + x / meters_per_deg_lon,
            )
        )
    segments = [
        MapSegment(start_node=i, end_node=(i + 1) % segment_count, length_m=chord)
        for i in range(segment_count)
    ]
    return GraphMap(nodes, segments)


def route_point(graph: GraphMap, route_position_m: float) -> GpsPoint:
    """Planar point on the segment chain at an arc-length position."""
    lengths = np.array([s.length_m for s in graph.segments])
    total = float(lengths.sum())
    s = np.mod(route_position_m, total) if graph.loop else np.clip(route_position_m, 0.0, total)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    i = min(int(np.searchsorted(cum, s, side="right")) - 1, len(lengths) - 1)
    frac = (s - cum[i]) / lengths[i]
    a, b = graph.segment_endpoints_xy(i)
    return graph.from_plane(a + frac * (b - a))


@dataclass
class PassData:
    """One simulated drive: per-corner streams, GPS trace, and ground truth."""

    run_id: str
    streams: dict
    gps_trace: GpsTrace
    truth_time: np.ndarray
    truth_distance: np.ndarray


def _noisy_channels(clean: SensorStream, noise: NoiseConfig, rng) -> SensorStream:
    """Fresh per-corner sensor noise; the shared speed channel is handled per pass."""
    n = len(clean)
    return SensorStream(
        time=clean.time.copy(),
        wheel_accel=clean.wheel_accel + rng.normal(0.0, noise.accel_std, n)
        if noise.accel_std
        else clean.wheel_accel.copy(),
        shock_disp=clean.shock_disp + rng.normal(0.0, noise.shock_disp_std, n)
        if noise.shock_disp_std
        else clean.shock_disp.copy(),
        shock_vel=clean.shock_vel + rng.normal(0.0, noise.shock_vel_std, n)
        if noise.shock_vel_std
        else clean.shock_vel.copy(),
        force=clean.force + rng.normal(0.0, noise.force_std, n)
        if noise.force_std
        else clean.force.copy(),
        speed=clean.speed.copy(),
        truth=clean.truth,
    )


class ScenarioRunner:
    """Builds and caches the synthetic world for one configuration.

    The clean dynamics depend only on road/vehicle/speed, so they are
    simulated once and reused across passes; each pass only re-draws noise.
    """

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.road = generate_road(
            config.road_length_m,
            config.road_spacing_m,
            config.roughness_class,
            seed=[config.seed, 1],
            loop=True,
        )
        self.graph = make_loop_graph(
            config.road_length_m,
            config.segment_count,
            config.center_latitude_deg,
            config.center_longitude_deg,
        )
        self._clean_front = None
        self._clean_rear = None

    @property
    def travel_m(self) -> float:
        return self.config.road_length_m + self.config.pass_overlap_m

    @property
    def duration_s(self) -> float:
        return self.travel_m / self.config.speed_mps

    def _clean_streams(self):
        if self._clean_front is None:
            cfg = self.config
            params = cfg.vehicle_params()
            self._clean_front = simulate_run(
                self.road, params, cfg.speed_mps, self.duration_s, dt=cfg.sim_dt_s
            )
            self._clean_rear = simulate_run(
                self.road,
                params,
                cfg.speed_mps,
                self.duration_s,
                dt=cfg.sim_dt_s,
                position_offset=-cfg.wheelbase_m,
            )
        return self._clean_front, self._clean_rear

    def simulate_pass(self, pass_index: int, run_id: str | None = None) -> PassData:
        """Pass ``pass_index`` (0-based); deterministic per (seed, index)."""
        cfg = self.config
        front, rear = self._clean_streams()
        noise = cfg.noise()
        streams = {}
        for ci, corner in enumerate(CORNERS):
            clean = front if corner in ("fl", "fr") else rear
            rng = np.random.default_rng([cfg.seed, 2, pass_index, ci])
            streams[corner] = _noisy_channels(clean, noise, rng)
        if noise.speed_std:
            rng = np.random.default_rng([cfg.seed, 3, pass_index])
            shared = rng.normal(0.0, noise.speed_std, len(front))
            for corner in CORNERS:
                streams[corner].speed = np.maximum(
                    streams[corner].speed + shared, 0.0
                )

        truth_t = front.time
        truth_d = front.truth.distance
        gps_t = np.arange(0.0, self.duration_s + 1e-9, cfg.gps_period_s)
        gps_d = np.interp(gps_t, truth_t, truth_d)
        rng = np.random.default_rng([cfg.seed, 4, pass_index])
        lats, lons = [], []
        for d in gps_d:
            point = route_point(self.graph, d)
            xy = self.graph.to_plane(point)
            if cfg.gps_noise_std_m:
                xy = xy + rng.normal(0.0, cfg.gps_noise_std_m, 2)
            noisy = self.graph.from_plane(xy)
            lats.append(noisy.latitude)
            lons.append(noisy.longitude)
        trace = GpsTrace(
            distances=gps_d, latitudes=np.array(lats), longitudes=np.array(lons)
        )
        return PassData(
            run_id=run_id or f"pass-{pass_index + 1}",
            streams=streams,
            gps_trace=trace,
            truth_time=truth_t,
            truth_distance=truth_d,
        )

    def reconstruct_pass(self, pass_data: PassData) -> DistanceProfile:
        """Sensor streams -> combined live height profile, transient trimmed."""
        cfg = self.config
        rc = cfg.reconstruction_config()
        profiles = {}
        transient = 0.0
        for corner in CORNERS:
            tp = estimate_road_profile(pass_data.streams[corner], rc)
            transient = max(transient, tp.transient_until)
            profiles[corner] = convert_time_to_distance(tp, cfg.map_spacing_m)
        corners = CornerProfiles(
            front_left=profiles["fl"],
            front_right=profiles["fr"],
            rear_left=profiles["rl"],
            rear_right=profiles["rr"],
        )
        combined = combine_corner_heights(corners, cfg.geometry())
        stream = pass_data.streams["fl"]
        dist = np.concatenate(
            [[0.0], np.cumsum(0.5 * (stream.speed[1:] + stream.speed[:-1]) * np.diff(stream.time))]
        )
        d_trim = float(np.interp(transient, stream.time, dist))
        trim_cells = int(np.ceil(d_trim / cfg.map_spacing_m))
        return crop_cells(combined, trim_cells, len(combined.values) - trim_cells)

    def build_map(self, passes: list[PassData]):
        """Reconstruct and ingest each pass in order; returns (map, reports)."""
        cfg = self.config
        builder = TerrainMapBuilder(
            graph=self.graph,
            spacing_m=cfg.map_spacing_m,
            stretch_length_m=cfg.stretch_length_m,
            extension_margin_m=cfg.extension_margin_m,
            ratio_threshold=cfg.match_ratio_threshold,
            exclusion_halfwidth=cfg.exclusion_halfwidth_cells,
            weight_cap=cfg.weight_cap,
            gps_offset_damping=cfg.gps_offset_damping,
            wheelbase_m=cfg.wheelbase_m,
        )
        for pass_data in passes:
            live = self.reconstruct_pass(pass_data)
            builder.partial_fit(live, pass_data.gps_trace, run_id=pass_data.run_id)
        return builder.map_, builder.reports_

    def localize_pass(
        self,
        terrain_map: TerrainMap,
        pass_data: PassData,
        matching_enabled: bool = True,
        matching_gate=None,
        on_update=None,
    ) -> tuple[list[LocalizerUpdate], Localizer]:
        cfg = self.config
        live = self.reconstruct_pass(pass_data)
        localizer = Localizer(
            terrain_map,
            geometry=cfg.geometry(),
            config=cfg.localizer_config(),
            matching_enabled=matching_enabled,
        )
        first_fix = GpsPoint(
            float(pass_data.gps_trace.latitudes[0]),
            float(pass_data.gps_trace.longitudes[0]),
        )
        start = (
            terrain_map.master.project_to_route(first_fix, apply_offset=False)
            - pass_data.gps_trace.distances[0]
        )
        if terrain_map.master.loop:
            # wrap the route start into the branch nearest zero so unwrapped
            # estimates share the truth's frame
            length = terrain_map.route_length_m
            start = np.mod(start + 0.5 * length, length) - 0.5 * length
        apriori = start + live.start_offset
        updates = localizer.run(
            live, apriori, matching_gate=matching_gate, on_update=on_update
        )
        return updates, localizer


def run_reference_pipeline(config: ScenarioConfig):
    """Simulate map passes + live pass, build the map, localize, return all."""
    runner = ScenarioRunner(config)
    map_passes = [runner.simulate_pass(i) for i in range(config.map_passes)]
    live_pass = runner.simulate_pass(config.map_passes, run_id="live")
    terrain_map, reports = runner.build_map(map_passes)
    updates, localizer = runner.localize_pass(terrain_map, live_pass)
    return {
        "runner": runner,
        "map_passes": map_passes,
        "live_pass": live_pass,
        "terrain_map": terrain_map,
        "reports": reports,
        "updates": updates,
        "localizer": localizer,
    }
