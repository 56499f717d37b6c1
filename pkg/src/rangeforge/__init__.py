"""rangeforge: range-tuned BEV detection pipelines over synthetic LiDAR scenarios.

Range experts (train range / voxel reciprocal -> inference range), range
ensembles with band routing, asynchronous near-far scheduling with
constant-velocity forecasting, a calibrated per-stage latency model, and
CDS/NDS-style per-band evaluation.
"""

from .detector import (
    GeneralizationMode,
    LatencyParams,
    OracleParams,
    RangeExpertConfig,
    ScoreCalibration,
    StageTimings,
    TimingRow,
    calibrate_latency,
    oracle_detect,
    points_on_object,
    predict_latency,
)
from .ensemble import (
    CombineMode,
    EnsembleSpec,
    FrameResult,
    NearFarSpec,
    NmsMode,
    combine_range_ensemble,
    forecast_detections,
    greedy_nms,
    run_near_far,
    run_range_ensemble,
)
from .evaluation import (
    ClassEval,
    CohortReport,
    CompositeMetric,
    LatencyStats,
    MatchSpec,
    average_precision,
    composite_scores,
    evaluate_cohorts,
    latency_stats,
    match_frame,
    tp_errors,
)
from .geometry import (
    Box3D,
    Point,
    PointCloud,
    Pose,
    Sweep,
    aggregate_sweeps,
    apply_pose,
    compensate_box,
    compose,
    invert_pose,
    relative_pose,
    transform_points,
    wrap_angle,
)
from .profiles import PROFILES, DetectorProfile, get_profile, make_expert
from .rangeops import (
    RangeBand,
    RangeMode,
    SparsePillarGrid,
    donut_crop,
    filter_detections_by_band,
    grid_side,
    occupancy_by_ring,
    radial_range,
    radial_ranges,
    voxelize,
)
from .scenario import EgoMotionKind, FrameInput, Scenario, ScenarioSpec, generate_scenario

__version__ = "0.1.0"
