"""File formats: scenario and detection streams as newline-delimited JSON.

Every write is atomic (temp file + rename) so interrupted runs never leave
truncated artifacts behind. Sweep points are stored inline as JSON lists by
default; a float32 columnar .npz sidecar option exists for large scenarios.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .detector import StageTimings
from .ensemble import FrameResult
from .geometry import Box3D, PointCloud, Pose, Sweep
from .scenario import FrameInput, Scenario, ScenarioSpec

__all__ = [
    "atomic_write_bytes",
    "atomic_write_text",
    "save_scenario",
    "load_scenario",
    "save_detections",
    "load_detections",
    "FrameDetections",
    "box_to_dict",
    "box_from_dict",
    "scenario_spec_to_dict",
    "scenario_spec_from_dict",
]

SCENARIO_FORMAT = "rangeforge-scenario-v1"
DETECTIONS_FORMAT = "rangeforge-detections-v1"


def atomic_write_bytes(path: Union[str, Path], data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Union[str, Path], text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _pose_to_dict(pose: Pose) -> dict:
    return {"quaternion": [float(v) for v in pose.rotation], "translation": [float(v) for v in pose.translation]}


def _pose_from_dict(d: dict) -> Pose:
    return Pose(np.array(d["quaternion"], dtype=float), np.array(d["translation"], dtype=float))


def box_to_dict(box: Box3D) -> dict:
    return {
        "center": [float(v) for v in box.center],
        "dims": [float(v) for v in box.dims],
        "yaw": float(box.yaw),
        "velocity": None if box.velocity is None else [float(v) for v in box.velocity],
        "class_id": int(box.class_id),
        "score": float(box.score),
    }


def box_from_dict(d: dict) -> Box3D:
    return Box3D(
        center=np.array(d["center"], dtype=float),
        dims=np.array(d["dims"], dtype=float),
        yaw=float(d["yaw"]),
        velocity=None if d.get("velocity") is None else np.array(d["velocity"], dtype=float),
        class_id=int(d.get("class_id", 0)),
        score=float(d.get("score", 1.0)),
    )


def scenario_spec_to_dict(spec: ScenarioSpec) -> dict:
    return {
        "n_frames": spec.n_frames,
        "frame_dt": spec.frame_dt,
        "ego_motion": spec.ego_motion.value,
        "ego_velocity": list(spec.ego_velocity),
        "ego_waypoints": None if spec.ego_waypoints is None else [list(w) for w in spec.ego_waypoints],
        "n_objects": spec.n_objects,
        "class_mix": [list(cw) for cw in spec.class_mix],
        "spawn_range": list(spec.spawn_range),
        "speed_range": list(spec.speed_range),
        "max_speed": spec.max_speed,
        "points_per_object_k": spec.points_per_object_k,
        "clutter_density": spec.clutter_density,
        "max_range": spec.max_range,
        "seed": spec.seed,
    }


def scenario_spec_from_dict(d: dict) -> ScenarioSpec:
    from .scenario import EgoMotionKind

    kwargs = dict(d)
    if "ego_motion" in kwargs:
        kwargs["ego_motion"] = EgoMotionKind(kwargs["ego_motion"])
    for key in ("ego_velocity", "spawn_range", "speed_range"):
        if kwargs.get(key) is not None:
            kwargs[key] = tuple(kwargs[key])
    if kwargs.get("ego_waypoints") is not None:
        kwargs["ego_waypoints"] = tuple(tuple(w) for w in kwargs["ego_waypoints"])
    if kwargs.get("class_mix") is not None:
        kwargs["class_mix"] = tuple((int(c), float(w)) for c, w in kwargs["class_mix"])
    return ScenarioSpec(**kwargs)


def _points_to_npz(points: PointCloud, path: Path) -> None:
    arrays = {"xyz": points.xyz.astype(np.float32)}
    if points.intensity is not None:
        arrays["intensity"] = points.intensity.astype(np.float32)
    if points.dt is not None:
        arrays["dt"] = points.dt.astype(np.float32)
    buf = tempfile.NamedTemporaryFile(dir=path.parent, suffix=".tmp", delete=False)
    try:
        np.savez(buf, **arrays)
        buf.close()
        os.replace(buf.name, path)
    except BaseException:
        buf.close()
        if os.path.exists(buf.name):
            os.unlink(buf.name)
        raise


def _points_from_npz(path: Path) -> PointCloud:
    with np.load(path) as data:
        return PointCloud(
            data["xyz"].astype(float),
            data["intensity"].astype(float) if "intensity" in data else None,
            data["dt"].astype(float) if "dt" in data else None,
        )


def _points_to_json(points: PointCloud) -> dict:
    return {
        "xyz": [[float(v) for v in row] for row in points.xyz],
        "intensity": None if points.intensity is None else [float(v) for v in points.intensity],
        "dt": None if points.dt is None else [float(v) for v in points.dt],
    }


def _points_from_json(d: dict) -> PointCloud:
    xyz = np.array(d["xyz"], dtype=float).reshape(-1, 3)
    intensity = None if d.get("intensity") is None else np.array(d["intensity"], dtype=float)
    dt = None if d.get("dt") is None else np.array(d["dt"], dtype=float)
    return PointCloud(xyz, intensity, dt)


def save_scenario(scenario: Scenario, path: Union[str, Path], binary_points: bool = False) -> None:
    """Write a scenario as NDJSON: one meta line then one line per frame."""
    path = Path(path)
    lines = [
        json.dumps(
            {"type": "meta", "format": SCENARIO_FORMAT, "spec": scenario_spec_to_dict(scenario.spec)},
            sort_keys=True,
        )
    ]
    frames_dir = path.parent / f"{path.stem}_frames"
    if binary_points:
        frames_dir.mkdir(parents=True, exist_ok=True)
    for frame in scenario.frames:
        record = {
            "type": "frame",
            "index": frame.index,
            "timestamp": float(frame.timestamp),
            "ego_pose": _pose_to_dict(frame.ego_pose),
            "truth": [box_to_dict(b) for b in frame.truth],
        }
        if binary_points:
            rel = f"{path.stem}_frames/frame_{frame.index:05d}.npz"
            _points_to_npz(frame.sweep.points, path.parent / rel)
            record["points"] = {"npz": rel}
        else:
            record["points"] = _points_to_json(frame.sweep.points)
        lines.append(json.dumps(record, sort_keys=True))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_scenario(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    spec: Optional[ScenarioSpec] = None
    frames: List[FrameInput] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if record.get("type") == "meta":
                spec = scenario_spec_from_dict(record["spec"])
                continue
            if record.get("type") != "frame":
                raise ValueError(f"unknown record type {record.get('type')!r} in {path}")
            pts = record["points"]
            if isinstance(pts, dict) and "npz" in pts:
                points = _points_from_npz(path.parent / pts["npz"])
            else:
                points = _points_from_json(pts)
            pose = _pose_from_dict(record["ego_pose"])
            timestamp = float(record["timestamp"])
            frames.append(
                FrameInput(
                    index=int(record["index"]),
                    timestamp=timestamp,
                    ego_pose=pose,
                    sweep=Sweep(timestamp, pose, points),
                    truth=tuple(box_from_dict(b) for b in record["truth"]),
                )
            )
    if not frames:
        raise ValueError(f"scenario file {path} holds no frames")
    if spec is None:
        spec = ScenarioSpec(n_frames=len(frames))
    return Scenario(spec, frames)


@dataclass(eq=False)
class FrameDetections:
    """One frame's detections loaded back from disk."""

    index: int
    timestamp: float
    boxes: List[Box3D]
    timings: StageTimings
    experts_run: tuple


def save_detections(results: Sequence[FrameResult], path: Union[str, Path]) -> None:
    lines = [json.dumps({"type": "meta", "format": DETECTIONS_FORMAT}, sort_keys=True)]
    for res in results:
        lines.append(
            json.dumps(
                {
                    "type": "detections",
                    "frame": res.index,
                    "timestamp": float(res.timestamp),
                    "boxes": [box_to_dict(b) for b in res.detections],
                    "timings": {k: float(v) for k, v in res.timings.as_dict().items()},
                    "experts_run": list(res.experts_run),
                },
                sort_keys=True,
            )
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_detections(path: Union[str, Path]) -> List[FrameDetections]:
    out: List[FrameDetections] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if record.get("type") == "meta":
                continue
            out.append(
                FrameDetections(
                    index=int(record["frame"]),
                    timestamp=float(record["timestamp"]),
                    boxes=[box_from_dict(b) for b in record["boxes"]],
                    timings=StageTimings(**record.get("timings", {})),
                    experts_run=tuple(record.get("experts_run", ())),
                )
            )
    return out
