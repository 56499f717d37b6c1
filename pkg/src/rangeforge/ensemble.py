"""Range ensembles and the asynchronous near-far scheduler.

Two ways to combine range experts are kept side by side: band routing (each
expert only contributes detections inside its owned band) and NMS pooling
(concatenate everything, suppress duplicates) — the latter introduces extra
false positives and exists for comparison. The near-far scheduler runs outer
experts every N frames and fills skipped frames with constant-velocity
forecasts of each expert's last output, ego-motion compensated.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .detector import RangeExpertConfig, StageTimings, oracle_detect, predict_latency
from .geometry import Box3D, PointCloud, Pose, Sweep, aggregate_sweeps, compensate_box
from .rangeops import RangeBand, RangeMode, donut_crop, filter_detections_by_band, voxelize
from .scenario import FrameInput

__all__ = [
    "CombineMode",
    "NmsMode",
    "EnsembleSpec",
    "NearFarSpec",
    "FrameInput",
    "FrameResult",
    "greedy_nms",
    "forecast_detections",
    "combine_range_ensemble",
    "run_range_ensemble",
    "run_near_far",
]


class CombineMode(str, Enum):
    BAND_ROUTE = "band_route"
    NMS_POOL = "nms_pool"


class NmsMode(str, Enum):
    GREEDY = "greedy"
    MAXPOOL = "maxpool"


def _validate_band_cover(bands: Sequence[RangeBand]) -> None:
    ordered = sorted(bands, key=lambda b: b.inner)
    if ordered[0].inner != 0.0:
        raise ValueError(f"band cover must start at 0, got {ordered[0].inner}")
    for prev, nxt in zip(ordered, ordered[1:]):
        if nxt.inner < prev.outer:
            raise ValueError(f"bands overlap: {prev.label} and {nxt.label}")
        if nxt.inner > prev.outer:
            raise ValueError(f"band cover has a gap between {prev.label} and {nxt.label}")


@dataclass(frozen=True)
class EnsembleSpec:
    """Range ensemble: one (expert, owned band) pair per member."""

    experts: Tuple[Tuple[RangeExpertConfig, RangeBand], ...]
    combine_mode: CombineMode = CombineMode.BAND_ROUTE
    test_time_mask: bool = False
    nms_dist_thresh: float = 1.0
    range_mode: RangeMode = RangeMode.BEV_L2

    def __post_init__(self) -> None:
        if not self.experts:
            raise ValueError("ensemble needs at least one expert")
        object.__setattr__(self, "experts", tuple((e, b) for e, b in self.experts))
        _validate_band_cover([band for _, band in self.experts])

    @property
    def bands(self) -> Tuple[RangeBand, ...]:
        return tuple(band for _, band in self.experts)

    def innermost_index(self) -> int:
        return min(range(len(self.experts)), key=lambda i: self.experts[i][1].inner)


@dataclass(frozen=True)
class NearFarSpec:
    """Asynchronous schedule over a range ensemble.

    ``frequencies[i]`` = run expert i every that many frames (1 = every
    frame). The expert owning the innermost band must run every frame.
    """

    ensemble: EnsembleSpec
    frequencies: Tuple[int, ...]
    forecaster: str = "constant_velocity"

    def __post_init__(self) -> None:
        object.__setattr__(self, "frequencies", tuple(int(f) for f in self.frequencies))
        if len(self.frequencies) != len(self.ensemble.experts):
            raise ValueError(
                f"{len(self.frequencies)} frequencies for {len(self.ensemble.experts)} experts"
            )
        if any(f < 1 for f in self.frequencies):
            raise ValueError("frequencies must be positive integers")
        if self.frequencies[self.ensemble.innermost_index()] != 1:
            raise ValueError("the innermost-band expert must run every frame")
        if self.forecaster != "constant_velocity":
            raise ValueError(f"unknown forecaster {self.forecaster!r}")


def greedy_nms(dets: Sequence[Box3D], dist_thresh: float, mode: NmsMode = NmsMode.GREEDY) -> List[Box3D]:
    """BEV center-distance NMS; same-class only. Output sorted by score descending.

    GREEDY: accept by descending score, rejecting boxes within dist_thresh of
    an accepted box. MAXPOOL: rasterize onto a grid of cell dist_thresh/2 and
    keep boxes that win their own cell's 3x3 neighborhood.
    """
    if dist_thresh <= 0:
        raise ValueError(f"dist_thresh must be positive, got {dist_thresh}")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    if mode == NmsMode.GREEDY:
        kept: List[int] = []
        for i in order:
            box = dets[i]
            ok = True
            for j in kept:
                other = dets[j]
                if other.class_id != box.class_id:
                    continue
                if float(np.hypot(*(box.bev_center - other.bev_center))) < dist_thresh:
                    ok = False
                    break
            if ok:
                kept.append(i)
        return [dets[i] for i in kept]
    if mode == NmsMode.MAXPOOL:
        cell = dist_thresh / 2.0
        cells = [
            (int(math.floor(d.center[0] / cell)), int(math.floor(d.center[1] / cell)))
            for d in dets
        ]
        kept = []
        for i in order:
            box, (ci, cj) = dets[i], cells[i]
            wins = True
            for j in range(len(dets)):
                if j == i or dets[j].class_id != box.class_id:
                    continue
                oi, oj = cells[j]
                if abs(oi - ci) <= 1 and abs(oj - cj) <= 1:
                    if (-dets[j].score, j) < (-box.score, i):
                        wins = False
                        break
            if wins:
                kept.append(i)
        return [dets[i] for i in kept]
    raise ValueError(f"unknown NMS mode {mode!r}")


def forecast_detections(
    dets: Sequence[Box3D], dt: float, pose_then: Pose, pose_now: Pose
) -> List[Box3D]:
    """Constant-velocity forecast of past detections into the current ego frame.

    Order matters: first compensate each box for ego motion, then advance its
    center by the (rotated) velocity times dt. Yaw, dims, and score are
    unchanged; a missing velocity is treated as zero (with a warning).
    """
    if dt <= 0:
        raise ValueError(f"forecast dt must be positive, got {dt}")
    out = []
    missing = 0
    for det in dets:
        box = compensate_box(det, pose_then, pose_now)
        vel = box.velocity
        if vel is None:
            missing += 1
            vel = np.zeros(2)
        center = box.center + np.array([vel[0] * dt, vel[1] * dt, 0.0])
        out.append(replace(box, center=center))
    if missing:
        warnings.warn(f"{missing} detection(s) had no velocity; forecast as static", stacklevel=2)
    return out


def combine_range_ensemble(
    spec: EnsembleSpec, per_expert_dets: Sequence[Sequence[Box3D]]
) -> List[Box3D]:
    """Combine per-expert detections per the spec's mode.

    BAND_ROUTE keeps each expert's detections only inside its owned band, with
    no cross-expert NMS; NMS_POOL concatenates everything and greedy-suppresses.
    """
    if len(per_expert_dets) != len(spec.experts):
        raise ValueError(
            f"{len(per_expert_dets)} detection lists for {len(spec.experts)} experts"
        )
    if spec.combine_mode == CombineMode.BAND_ROUTE:
        out: List[Box3D] = []
        for (_, band), dets in zip(spec.experts, per_expert_dets):
            out.extend(filter_detections_by_band(dets, band, spec.range_mode))
        return out
    pooled = [d for dets in per_expert_dets for d in dets]
    return greedy_nms(pooled, spec.nms_dist_thresh, NmsMode.GREEDY)


@dataclass(eq=False)
class FrameResult:
    index: int
    timestamp: float
    detections: List[Box3D]
    timings: StageTimings
    experts_run: Tuple[int, ...]
    per_expert: List[List[Box3D]] = field(default_factory=list)


DetectFn = Callable[[RangeExpertConfig, Sequence[Box3D], PointCloud, int], List[Box3D]]


@dataclass
class _ExpertHistory:
    frame_index: int
    timestamp: float
    ego_pose: Pose
    detections: List[Box3D]


def _run_schedule(
    spec: EnsembleSpec,
    frequencies: Sequence[int],
    frames: Sequence[FrameInput],
    sweep_window: int,
    detect: DetectFn,
    combine: Callable[[Sequence[Sequence[Box3D]]], List[Box3D]],
) -> List[FrameResult]:
    sweeps: List[Sweep] = []
    history: Dict[int, _ExpertHistory] = {}
    results: List[FrameResult] = []
    for frame in frames:
        sweeps.append(frame.sweep)
        cloud = aggregate_sweeps(sweeps[-sweep_window:], sweep_window)
        per_expert: List[List[Box3D]] = []
        frame_timings = StageTimings()
        ran: List[int] = []
        for i, (expert, band) in enumerate(spec.experts):
            if frame.index % frequencies[i] == 0:
                expert_cloud = (
                    donut_crop(cloud, band, spec.range_mode) if spec.test_time_mask else cloud
                )
                dets = detect(expert, frame.truth, expert_cloud, frame.index)
                grid = voxelize(expert_cloud, expert.infer_range, expert.voxel_reciprocal)
                frame_timings = frame_timings + predict_latency(expert.latency, grid)
                history[i] = _ExpertHistory(frame.index, frame.timestamp, frame.ego_pose, dets)
                ran.append(i)
            elif i in history:
                # Forecast from the last detector output (cost modeled as 0 ms).
                last = history[i]
                dets = forecast_detections(
                    last.detections, frame.timestamp - last.timestamp, last.ego_pose, frame.ego_pose
                )
            else:
                warnings.warn(
                    f"expert {i} skipped with no history at frame {frame.index}", stacklevel=2
                )
                dets = []
            per_expert.append(dets)
        results.append(
            FrameResult(
                index=frame.index,
                timestamp=frame.timestamp,
                detections=combine(per_expert),
                timings=frame_timings,
                experts_run=tuple(ran),
                per_expert=per_expert,
            )
        )
    return results


def run_range_ensemble(
    spec: EnsembleSpec,
    frames: Sequence[FrameInput],
    sweep_window: int = 5,
    detect: DetectFn = oracle_detect,
) -> List[FrameResult]:
    """Synchronous ensemble: every expert runs every frame."""
    return _run_schedule(
        spec,
        [1] * len(spec.experts),
        frames,
        sweep_window,
        detect,
        lambda per_expert: combine_range_ensemble(spec, per_expert),
    )


def run_near_far(
    spec: NearFarSpec,
    frames: Sequence[FrameInput],
    sweep_window: int = 5,
    detect: DetectFn = oracle_detect,
) -> List[FrameResult]:
    """Asynchronous near-far ensemble per the configured frequencies.

    Expert i runs iff frame_index % frequencies[i] == 0; otherwise its last
    output is constant-velocity forecast into the current frame. Frame latency
    sums only the stage timings of experts that actually ran. Outputs are
    band-routed.
    """
    ensemble = spec.ensemble
    return _run_schedule(
        ensemble,
        spec.frequencies,
        frames,
        sweep_window,
        detect,
        lambda per_expert: combine_range_ensemble(
            replace_combine_mode(ensemble), per_expert
        ),
    )


def replace_combine_mode(spec: EnsembleSpec) -> EnsembleSpec:
    """Near-far combination is always band routing."""
    if spec.combine_mode == CombineMode.BAND_ROUTE:
        return spec
    return EnsembleSpec(
        experts=spec.experts,
        combine_mode=CombineMode.BAND_ROUTE,
        test_time_mask=spec.test_time_mask,
        nms_dist_thresh=spec.nms_dist_thresh,
        range_mode=spec.range_mode,
    )
