"""Range-expert detector contract: synthetic oracle + per-stage latency model.

The oracle stands in for a trained BEV detector. Its knobs encode the
qualitative cross-range generalization regimes observed for the four
architecture families (locally calibrated scores, globally overconfident
scores, soft-target generalization, and positional-encoding collapse when run
at a range different from the training range), so the evaluator can tell the
regimes apart without any learned weights.

Determinism contract: every random draw comes from a stream derived from
(seed, frame_index, box_index), so results are independent of evaluation
order and of how many other boxes exist in the scene.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import Box3D, PointCloud, wrap_angle
from .rangeops import SparsePillarGrid, grid_side, radial_range
from .seeding import derive_rng

__all__ = [
    "GeneralizationMode",
    "ScoreCalibration",
    "OracleParams",
    "LatencyParams",
    "StageTimings",
    "RangeExpertConfig",
    "TimingRow",
    "points_on_object",
    "oracle_detect",
    "predict_latency",
    "calibrate_latency",
]

class GeneralizationMode(str, Enum):
    LOCAL_CALIBRATED = "local_calibrated"
    GLOBAL_OVERCONFIDENT = "global_overconfident"
    SOFT_TARGET = "soft_target"
    ABSOLUTE_PE_COLLAPSE = "absolute_pe_collapse"


class ScoreCalibration(str, Enum):
    CALIBRATED = "calibrated"
    OVERCONFIDENT_FAR = "overconfident_far"
    ZERO_OUTSIDE_TRAIN = "zero_outside_train"


@dataclass(frozen=True)
class OracleParams:
    """Knobs of the synthetic detector.

    Recall decays once an object carries fewer than ``density_floor`` points
    (``density_floor <= 0`` disables the decay entirely). Translation noise
    grows linearly with range and with voxel size.
    """

    base_recall: float = 0.9
    density_floor: float = 5.0
    recall_decay: float = 1.0
    sigma_t0: float = 0.05
    sigma_t_slope: float = 0.002
    sigma_t_voxel: float = 0.3
    yaw_sigma: float = 0.03
    score_calibration: ScoreCalibration = ScoreCalibration.CALIBRATED
    fp_rate: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.base_recall <= 1.0:
            raise ValueError(f"base_recall {self.base_recall} outside [0, 1]")
        for name in ("recall_decay", "sigma_t0", "sigma_t_slope", "sigma_t_voxel", "yaw_sigma", "fp_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class LatencyParams:
    """Per-stage linear cost model, milliseconds.

    point_proc scales with occupied voxels, backbone/neck with dense grid
    cells, head and post-processing are constants per architecture profile.
    """

    c_point_per_kvoxel: float
    c_backbone_per_mcell: float
    c_neck_per_mcell: float
    c_head: float
    c_post: float

    def __post_init__(self) -> None:
        for name in ("c_point_per_kvoxel", "c_backbone_per_mcell", "c_neck_per_mcell", "c_head", "c_post"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class StageTimings:
    point_proc: float = 0.0
    backbone: float = 0.0
    neck: float = 0.0
    head: float = 0.0
    post_proc: float = 0.0

    def __post_init__(self) -> None:
        for name in ("point_proc", "backbone", "neck", "head", "post_proc"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def total(self) -> float:
        return self.point_proc + self.backbone + self.neck + self.head + self.post_proc

    def __add__(self, other: "StageTimings") -> "StageTimings":
        return StageTimings(
            self.point_proc + other.point_proc,
            self.backbone + other.backbone,
            self.neck + other.neck,
            self.head + other.head,
            self.post_proc + other.post_proc,
        )

    def as_dict(self) -> Dict[str, float]:
        return {
            "point_proc": self.point_proc,
            "backbone": self.backbone,
            "neck": self.neck,
            "head": self.head,
            "post_proc": self.post_proc,
        }


@dataclass(frozen=True)
class RangeExpertConfig:
    """A range expert: trained at ``train_range`` with voxel reciprocal
    ``voxel_reciprocal``, run fully-convolutionally at ``infer_range``.

    A single voxel_reciprocal field covers both training and inference; the
    voxel size never differs between the two.
    """

    train_range: float
    voxel_reciprocal: float
    infer_range: float
    generalization_mode: GeneralizationMode = GeneralizationMode.LOCAL_CALIBRATED
    oracle: OracleParams = field(default_factory=OracleParams)
    latency: LatencyParams = field(default_factory=lambda: LatencyParams(0.5, 20.0, 12.0, 1.2, 58.0))

    def __post_init__(self) -> None:
        if self.train_range <= 0 or self.infer_range <= 0 or self.voxel_reciprocal <= 0:
            raise ValueError("train_range, infer_range, and voxel_reciprocal must be positive")

    @property
    def name(self) -> str:
        return f"{self.train_range:g}/{self.voxel_reciprocal:g} -> {self.infer_range:g}"


def points_on_object(cloud: PointCloud, box: Box3D) -> int:
    """Count cloud points inside the box's BEV footprint (z ignored)."""
    if len(cloud) == 0:
        return 0
    d = cloud.xyz[:, :2] - box.center[:2]
    c, s = math.cos(-box.yaw), math.sin(-box.yaw)
    local_x = c * d[:, 0] - s * d[:, 1]
    local_y = s * d[:, 0] + c * d[:, 1]
    half_l, half_w = box.dims[0] / 2.0, box.dims[1] / 2.0
    return int(np.count_nonzero((np.abs(local_x) <= half_l) & (np.abs(local_y) <= half_w)))


def _detection_score(
    calibration: ScoreCalibration,
    p_detect: float,
    range_m: float,
    config: "RangeExpertConfig",
    rng: np.random.Generator,
) -> float:
    if calibration == ScoreCalibration.OVERCONFIDENT_FAR:
        return float(rng.uniform(0.5, 1.0))
    if calibration == ScoreCalibration.ZERO_OUTSIDE_TRAIN and range_m > config.train_range:
        return float(rng.uniform(0.0, 0.05))
    # Calibrated: confidence falls with range, clamped to [0, 1].
    return float(min(1.0, max(0.0, p_detect * (1.0 - range_m / (2.0 * config.infer_range)))))


def oracle_detect(
    config: RangeExpertConfig,
    scene_truth: Sequence[Box3D],
    cloud: PointCloud,
    frame_index: int = 0,
    annotation_range: Optional[float] = None,
) -> List[Box3D]:
    """Emulate a range expert on ground truth + points, deterministically.

    Each ground-truth box within ``infer_range`` is detected with probability
    ``base_recall * min(1, points_on_object / density_floor) ** recall_decay``;
    detected boxes receive range- and voxel-dependent Gaussian center noise,
    yaw noise, a pass-through velocity, and a score per the configured
    calibration. Poisson false positives land uniformly on the infer-range
    disk. In ABSOLUTE_PE_COLLAPSE mode every detection is additionally
    suppressed with probability 0.98 whenever infer_range != train_range.
    """
    params = config.oracle
    if annotation_range is not None and config.infer_range > annotation_range:
        warnings.warn(
            f"infer_range {config.infer_range} exceeds annotation range {annotation_range}",
            stacklevel=2,
        )
    collapse = (
        config.generalization_mode == GeneralizationMode.ABSOLUTE_PE_COLLAPSE
        and config.infer_range != config.train_range
    )
    sigma_voxel = params.sigma_t_voxel / config.voxel_reciprocal
    detections: List[Box3D] = []
    for idx, gt in enumerate(scene_truth):
        range_m = radial_range(gt.bev_center)
        if range_m >= config.infer_range:
            continue
        rng = derive_rng(params.seed, frame_index, 0, idx)
        if params.density_floor > 0:
            ratio = min(1.0, points_on_object(cloud, gt) / params.density_floor)
        else:
            ratio = 1.0
        p_detect = params.base_recall * ratio**params.recall_decay
        if rng.uniform() >= p_detect:
            continue
        sigma_t = params.sigma_t0 + params.sigma_t_slope * range_m + sigma_voxel
        noise_xy = rng.standard_normal(2) * sigma_t
        noise_yaw = float(rng.standard_normal()) * params.yaw_sigma
        score = _detection_score(params.score_calibration, p_detect, range_m, config, rng)
        if collapse and rng.uniform() < 0.98:
            continue
        center = gt.center + np.array([noise_xy[0], noise_xy[1], 0.0])
        detections.append(
            replace(gt, center=center, yaw=wrap_angle(gt.yaw + noise_yaw), score=score)
        )
    fp_rng = derive_rng(params.seed, frame_index, 1)
    n_fp = int(fp_rng.poisson(params.fp_rate)) if params.fp_rate > 0 else 0
    class_ids = sorted({gt.class_id for gt in scene_truth}) or [0]
    for _ in range(n_fp):
        radius = config.infer_range * math.sqrt(fp_rng.uniform())
        angle = fp_rng.uniform(0.0, math.tau)
        yaw = wrap_angle(fp_rng.uniform(-math.pi, math.pi))
        score = float(fp_rng.uniform(0.0, 0.3))
        class_id = int(class_ids[int(fp_rng.integers(len(class_ids)))])
        if collapse and fp_rng.uniform() < 0.98:
            continue
        detections.append(
            Box3D(
                center=np.array([radius * math.cos(angle), radius * math.sin(angle), 0.8]),
                dims=np.array([4.0, 2.0, 1.6]),
                yaw=yaw,
                velocity=np.zeros(2),
                class_id=class_id,
                score=score,
            )
        )
    return detections


def predict_latency(params: LatencyParams, grid: SparsePillarGrid) -> StageTimings:
    """Per-stage latency of one detector invocation on the given grid."""
    mcells = grid.side * grid.side / 1e6
    return StageTimings(
        point_proc=params.c_point_per_kvoxel * grid.occupied_count / 1000.0,
        backbone=params.c_backbone_per_mcell * mcells,
        neck=params.c_neck_per_mcell * mcells,
        head=params.c_head,
        post_proc=params.c_post,
    )


@dataclass(frozen=True)
class TimingRow:
    """One measured row for latency calibration."""

    infer_range: float
    voxel_reciprocal: float
    occupied_voxels: float
    timings: StageTimings

    @property
    def mcells(self) -> float:
        side = grid_side(self.infer_range, self.voxel_reciprocal)
        return side * side / 1e6


def _fit_through_origin(x: np.ndarray, y: np.ndarray) -> float:
    denom = float(x @ x)
    if denom == 0.0:
        return 0.0
    return float(x @ y) / denom


def calibrate_latency(
    rows: Sequence[TimingRow],
) -> Tuple[LatencyParams, Dict[str, List[float]]]:
    """Least-squares fit of the per-stage linear model over measured rows.

    Returns the fitted params and per-stage relative residuals
    ``(predicted - measured) / measured`` per row. Requires at least two rows
    with distinct grid areas.
    """
    if len(rows) < 2:
        raise ValueError("calibration needs >= 2 rows")
    areas = {grid_side(r.infer_range, r.voxel_reciprocal) for r in rows}
    if len(areas) < 2:
        raise ValueError("degenerate calibration input: all rows share one grid area")
    kvox = np.array([r.occupied_voxels / 1000.0 for r in rows])
    mcells = np.array([r.mcells for r in rows])
    point = np.array([r.timings.point_proc for r in rows])
    backbone = np.array([r.timings.backbone for r in rows])
    neck = np.array([r.timings.neck for r in rows])
    head = np.array([r.timings.head for r in rows])
    post = np.array([r.timings.post_proc for r in rows])
    params = LatencyParams(
        c_point_per_kvoxel=_fit_through_origin(kvox, point),
        c_backbone_per_mcell=_fit_through_origin(mcells, backbone),
        c_neck_per_mcell=_fit_through_origin(mcells, neck),
        c_head=float(np.mean(head)),
        c_post=float(np.mean(post)),
    )
    preds = {
        "point_proc": params.c_point_per_kvoxel * kvox,
        "backbone": params.c_backbone_per_mcell * mcells,
        "neck": params.c_neck_per_mcell * mcells,
        "head": np.full(len(rows), params.c_head),
        "post_proc": np.full(len(rows), params.c_post),
    }
    measured = {
        "point_proc": point,
        "backbone": backbone,
        "neck": neck,
        "head": head,
        "post_proc": post,
    }
    residuals = {
        stage: [
            float((p - m) / m) if m != 0 else 0.0
            for p, m in zip(preds[stage], measured[stage])
        ]
        for stage in preds
    }
    return params, residuals
