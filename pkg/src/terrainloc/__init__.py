"""Terrain-based longitudinal vehicle localization from suspension sensors."""

from .localizer import (
    ErrorSummary,
    FixStatus,
    Localizer,
    LocalizerConfig,
    LocalizerUpdate,
    TerrainLocalizer,
    evaluate_errors,
    matched_fraction,
)
from .matching import (
    CorrelationResult,
    fast_cross_correlation,
    find_peak_with_ratio,
    locate_snippet,
    raw_cross_correlation,
)
from .pitch import (
    CornerProfiles,
    PitchTransformer,
    VehicleGeometry,
    combine_corner_heights,
    compute_pitch_profile,
    derive_pitch_from_heights,
    differentiate_profile,
    matching_signal,
)
from .quarter_car import (
    IdentifiedParams,
    NoiseConfig,
    QuarterCarIdentifier,
    QuarterCarParams,
    QuarterCarState,
    RoadInput,
    SensorStream,
    generate_road,
    identify_parameters,
    simulate_run,
    step_dynamics,
)
from .reconstruction import (
    ReconstructionConfig,
    RoadProfileReconstructor,
    TimeProfile,
    double_integrate_highpass,
    estimate_road_profile,
)
from .resample import (
    DistanceProfile,
    TimeToDistanceResampler,
    convert_time_to_distance,
    crop,
)
from .scenario import ScenarioConfig, ScenarioRunner, make_loop_graph
from .terrain_map import (
    GpsPoint,
    GpsTrace,
    GraphMap,
    MapNode,
    MapSegment,
    MasterProfile,
    MatchStatus,
    Stretch,
    TerrainMap,
    TerrainMapBuilder,
    extract_stretches,
    load_map,
    match_stretch,
    merge_stretch,
    project_gps,
    save_map,
)

__version__ = "0.1.0"
