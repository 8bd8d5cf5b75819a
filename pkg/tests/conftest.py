import numpy as np
import pytest

from terrainloc.quarter_car import QuarterCarParams, generate_road, simulate_run
from terrainloc.scenario import ScenarioConfig, ScenarioRunner


@pytest.fixture(scope="session")
def default_params():
    return QuarterCarParams()


@pytest.fixture(scope="session")
def class_c_road():
    return generate_road(700.0, 0.05, "C", seed=[3, 1])


@pytest.fixture(scope="session")
def clean_stream(default_params, class_c_road):
    """60 s noiseless run over the class-C road at 10 m/s."""
    return simulate_run(class_c_road, default_params, 10.0, 60.0, dt=1e-3)


@pytest.fixture(scope="session")
def small_config():
    """Shrunk reference scenario: 900 m loop, 2 map passes + live."""
    return ScenarioConfig(
        seed=7,
        road_length_m=900.0,
        segment_count=6,
        pass_overlap_m=250.0,
        map_passes=2,
    )


@pytest.fixture(scope="session")
def small_pipeline(small_config):
    """Noisy small scenario run end to end once; reused across tests."""
    runner = ScenarioRunner(small_config)
    passes = [runner.simulate_pass(i) for i in range(small_config.map_passes)]
    live = runner.simulate_pass(small_config.map_passes, run_id="live")
    terrain_map, reports = runner.build_map(passes)
    return {
        "runner": runner,
        "passes": passes,
        "live": live,
        "map": terrain_map,
        "reports": reports,
    }


@pytest.fixture(scope="session")
def noiseless_pipeline(small_config):
    config = small_config.noiseless()
    runner = ScenarioRunner(config)
    passes = [runner.simulate_pass(i) for i in range(config.map_passes)]
    live = runner.simulate_pass(config.map_passes, run_id="live")
    terrain_map, reports = runner.build_map(passes)
    return {
        "runner": runner,
        "passes": passes,
        "live": live,
        "map": terrain_map,
        "reports": reports,
    }
