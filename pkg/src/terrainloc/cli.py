"""Command-line front end: simulate, build-map, localize, evaluate, inspect-map."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .localizer import evaluate_errors, matched_fraction
from .scenario import CORNERS, ScenarioConfig, ScenarioRunner
from .serialization import (
    atomic_write,
    read_estimate_log,
    read_gps_trace,
    read_sensor_stream,
    write_correlation_snapshot,
    write_error_cdf,
    write_estimate_log,
    write_gps_trace,
    write_road,
    write_sensor_stream,
)
from .terrain_map import (
    GraphMap,
    MapFormatError,
    MapNode,
    MapSegment,
    TerrainMap,
    load_map,
    save_map,
)


class CliError(Exception):
    """User-facing failure with a machine-readable class."""

    def __init__(self, error_class: str, message: str):
        super().__init__(message)
        self.error_class = error_class


def _load_config(args) -> ScenarioConfig:
    config = (
        ScenarioConfig.from_yaml(args.config)
        if getattr(args, "config", None)
        else ScenarioConfig()
    )
    if getattr(args, "seed", None) is not None:
        from dataclasses import replace

        config = replace(config, seed=args.seed)
    return config


def write_graph(path, graph: GraphMap) -> None:
    payload = {
        "nodes": [[n.node_id, n.latitude, n.longitude] for n in graph.nodes],
        "segments": [[s.start_node, s.end_node, s.length_m] for s in graph.segments],
    }
    with atomic_write(path) as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_graph(path) -> GraphMap:
    with open(path) as fh:
        payload = json.load(fh)
    nodes = [MapNode(int(n[0]), float(n[1]), float(n[2])) for n in payload["nodes"]]
    segments = [
        MapSegment(int(s[0]), int(s[1]), float(s[2])) for s in payload["segments"]
    ]
    return GraphMap(nodes, segments)


def _pass_paths(out: Path, run_id: str) -> dict:
    return {
        **{c: out / f"{run_id}_corner_{c}.csv" for c in CORNERS},
        "gps": out / f"{run_id}_gps.csv",
        "truth": out / f"{run_id}_truth.csv",
    }


def cmd_simulate(args) -> int:
    config = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runner = ScenarioRunner(config)

    write_road(out / "road.csv", runner.road)
    write_graph(out / "graph.json", runner.graph)
    config.to_yaml(out / "config.yaml")

    run_ids = [f"pass-{i + 1}" for i in range(config.map_passes)] + ["live"]
    for index, run_id in enumerate(run_ids):
        data = runner.simulate_pass(index, run_id=run_id)
        paths = _pass_paths(out, run_id)
        for corner in CORNERS:
            write_sensor_stream(paths[corner], data.streams[corner])
        write_gps_trace(paths["gps"], data.gps_trace)
        with atomic_write(paths["truth"]) as fh:
            fh.write("t,route_position\n")
            np.savetxt(
                fh,
                np.column_stack([data.truth_time, data.truth_distance]),
                fmt="%.9g",
                delimiter=",",
            )
    print(f"wrote {len(run_ids)} passes to {out}")
    return 0


def _read_pass(out: Path, run_id: str):
    from .scenario import PassData

    paths = _pass_paths(out, run_id)
    for key in (*CORNERS, "gps"):
        if not paths[key].exists():
            raise CliError("missing-input", f"missing pass file {paths[key]}")
    streams = {c: read_sensor_stream(paths[c]) for c in CORNERS}
    trace = read_gps_trace(paths["gps"])
    if paths["truth"].exists():
        truth = np.loadtxt(paths["truth"], delimiter=",", skiprows=1, ndmin=2)
        truth_t, truth_d = truth[:, 0], truth[:, 1]
    else:
        truth_t = truth_d = np.zeros(0)
    return PassData(
        run_id=run_id,
        streams=streams,
        gps_trace=trace,
        truth_time=truth_t,
        truth_distance=truth_d,
    )


def cmd_build_map(args) -> int:
    config = _load_config(args)
    data_dir = Path(args.data)
    runner = ScenarioRunner.__new__(ScenarioRunner)
    runner.config = config
    runner.graph = read_graph(args.graph) if args.graph else None
    if runner.graph is None:
        raise CliError("missing-input", "build-map requires --graph")
    runner.road = None
    runner._clean_front = runner._clean_rear = None

    passes = [_read_pass(data_dir, run_id) for run_id in args.passes]
    terrain_map, reports = runner.build_map(passes)
    save_map(terrain_map, args.map)

    with atomic_write(Path(args.map).with_suffix(".report.json")) as fh:
        json.dump(
            [
                {
                    "run_id": r.run_id,
                    "pass_offset_m": r.pass_offset_m,
                    "bootstrap": r.n_bootstrap,
                    "matched": r.n_matched,
                    "quarantined": r.n_quarantined,
                    "ratios": [round(x, 6) for x in r.ratios],
                }
                for r in reports
            ],
            fh,
            indent=1,
            sort_keys=True,
        )
        fh.write("\n")
    for r in reports:
        print(
            f"{r.run_id}: {r.n_bootstrap} bootstrap, {r.n_matched} matched, "
            f"{r.n_quarantined} quarantined"
        )
    return 0


def cmd_localize(args) -> int:
    config = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    terrain_map = load_map(args.map)
    if abs(terrain_map.spacing - config.map_spacing_m) > 1e-12:
        raise CliError(
            "spacing-mismatch",
            f"map spacing {terrain_map.spacing} differs from config "
            f"{config.map_spacing_m}",
        )
    runner = ScenarioRunner.__new__(ScenarioRunner)
    runner.config = config
    runner.graph = terrain_map.graph
    runner.road = None
    runner._clean_front = runner._clean_rear = None

    pass_data = _read_pass(Path(args.data), args.live)

    snapshots = sorted(args.snapshot_at or [])
    captured: dict[float, tuple] = {}

    def on_update(update, loc):
        if loc.last_correlation is None:
            return
        for snap_at in snapshots:
            old = captured.get(snap_at)
            dist = abs(update.travel_distance - snap_at)
            if old is None or dist < old[0]:
                captured[snap_at] = (
                    dist,
                    loc.last_window_start_cell or 0,
                    loc.last_correlation.copy(),
                )

    updates, _localizer = runner.localize_pass(
        terrain_map,
        pass_data,
        matching_enabled=not args.disable_matching,
        on_update=on_update if snapshots else None,
    )
    write_estimate_log(out / "estimates.csv", updates)

    if len(pass_data.truth_distance):
        summary = evaluate_errors(updates, 0.0, stride_m=args.stride)
        write_error_cdf(out / "error_cdf.csv", summary)
        print(
            f"matched {matched_fraction(updates):.1%} of {len(updates)} updates; "
            + ", ".join(
                f"frac(<{t:g} m)={f:.3f}" for t, f in sorted(summary.fractions.items())
            )
        )
    else:
        print(f"matched {matched_fraction(updates):.1%} of {len(updates)} updates")

    for snap_at, (_dist, start_cell, corr) in captured.items():
        lags = np.arange(len(corr))
        write_correlation_snapshot(
            out / f"snapshot_{int(snap_at)}m.csv",
            (start_cell + lags) * terrain_map.spacing,
            corr,
        )
    return 0


def cmd_evaluate(args) -> int:
    updates = read_estimate_log(args.estimates)
    truth = np.loadtxt(args.truth, delimiter=",", skiprows=1, ndmin=2)
    # the simulator's odometer and route position share the origin; the truth
    # trace pins the route position reached at each travel distance
    route = truth[:, 1]
    summary = evaluate_errors(
        updates, lambda d: float(np.interp(d, route, route)), stride_m=args.stride
    )
    if args.out:
        write_error_cdf(args.out, summary)
    for thr, frac in sorted(summary.fractions.items()):
        print(f"fraction below {thr:g} m: {frac:.3f}")
    print(f"samples: {len(summary.errors)}, stride {summary.stride_m:g} m")
    return 0


def cmd_inspect_map(args) -> int:
    terrain_map = load_map(args.map)
    master = terrain_map.master
    initialized = float(np.mean(master.weights > 0.0))
    print(f"map file: {args.map}")
    print(f"segments: {len(terrain_map.graph.segments)}"
          f" ({'loop' if master.loop else 'open chain'})")
    print(f"route length: {master.route_length_m:.1f} m at {master.spacing:g} m cells")
    print(f"cells: {master.n_cells}, initialized: {initialized:.1%}")
    if initialized:
        w = master.weights[master.weights > 0]
        print(f"weights: min {w.min():g}, median {np.median(w):g}, max {w.max():g}")
    print("checksum: ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="terrainloc",
        description="Terrain-based longitudinal localization toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="scenario config YAML")
        p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("simulate", help="generate sensor streams, road, GPS traces")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("build-map", help="merge passes into a terrain map")
    common(p)
    p.add_argument("--data", required=True, help="directory with pass files")
    p.add_argument("--graph", required=True, help="graph geometry JSON")
    p.add_argument("--map", required=True, help="output map path")
    p.add_argument(
        "--passes",
        nargs="+",
        default=["pass-1", "pass-2", "pass-3"],
        help="run ids to ingest, in order",
    )
    p.set_defaults(func=cmd_build_map)

    p = sub.add_parser("localize", help="run the localizer over a live pass")
    common(p)
    p.add_argument("--map", required=True)
    p.add_argument("--data", required=True, help="directory with pass files")
    p.add_argument("--live", default="live", help="run id of the live pass")
    p.add_argument("--out", required=True)
    p.add_argument("--disable-matching", action="store_true")
    p.add_argument("--stride", type=float, default=10.0, help="error sampling stride")
    p.add_argument(
        "--snapshot-at",
        type=float,
        action="append",
        help="dump the correlation trace nearest this travel distance",
    )
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("evaluate", help="error CDF from an estimate log")
    p.add_argument("--estimates", required=True)
    p.add_argument("--truth", required=True, help="truth trace t,route_position")
    p.add_argument("--stride", type=float, default=10.0)
    p.add_argument("--out", help="write the CDF here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect-map", help="print a map file summary")
    p.add_argument("--map", required=True)
    p.set_defaults(func=cmd_inspect_map)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error[{exc.error_class}]: {exc}", file=sys.stderr)
        return 2
    except MapFormatError as exc:
        print(f"error[map-format]: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error[invalid-input]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
