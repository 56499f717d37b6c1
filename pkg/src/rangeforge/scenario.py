"""Synthetic LiDAR scenario generation.

The generator builds a controllable stand-in for a long-range driving
dataset: objects move at exact constant velocity in the world frame, the ego
follows a configurable motion, and LiDAR returns are sampled on object
footprints with an expected count proportional to 1/range^2 (the radial
sparsity law), plus uniform ground clutter. Everything is a deterministic
function of the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geometry import Box3D, PointCloud, Pose, Sweep, wrap_angle
from .seeding import derive_rng

__all__ = [
    "EgoMotionKind",
    "ScenarioSpec",
    "FrameInput",
    "Scenario",
    "generate_scenario",
]

# Object range is floored here when computing expected point counts so the
# 1/r^2 law stays finite for objects on top of the sensor.
_MIN_DENSITY_RANGE = 1.0

_CLASS_BASE_DIMS = {
    0: (4.6, 1.95, 1.6),   # car-like
    1: (0.8, 0.8, 1.8),    # pedestrian-like
    2: (8.5, 2.8, 3.2),    # truck-like
}
_DEFAULT_DIMS = (4.6, 1.95, 1.6)


class EgoMotionKind(str, Enum):
    STATIC = "static"
    CONSTANT_VELOCITY = "constant_velocity"
    WAYPOINTS = "waypoints"


@dataclass(frozen=True)
class ScenarioSpec:
    n_frames: int = 10
    frame_dt: float = 0.5
    ego_motion: EgoMotionKind = EgoMotionKind.STATIC
    ego_velocity: Tuple[float, float] = (0.0, 0.0)
    ego_waypoints: Optional[Tuple[Tuple[float, float], ...]] = None
    n_objects: int = 20
    class_mix: Tuple[Tuple[int, float], ...] = ((0, 1.0),)
    spawn_range: Tuple[float, float] = (5.0, 150.0)
    speed_range: Tuple[float, float] = (0.0, 8.0)
    max_speed: float = 15.0
    points_per_object_k: float = 1e5
    clutter_density: float = 0.002
    max_range: float = 150.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if self.frame_dt <= 0:
            raise ValueError("frame_dt must be positive")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")
        if self.clutter_density < 0 or self.points_per_object_k < 0:
            raise ValueError("densities must be >= 0")
        lo, hi = self.spawn_range
        if not 0 <= lo < hi:
            raise ValueError(f"invalid spawn_range {self.spawn_range}")
        if not self.class_mix or any(w < 0 for _, w in self.class_mix):
            raise ValueError("class_mix must be non-empty with non-negative weights")
        if self.ego_motion == EgoMotionKind.WAYPOINTS and not self.ego_waypoints:
            raise ValueError("ego_waypoints required for waypoint motion")
        object.__setattr__(self, "ego_velocity", tuple(float(v) for v in self.ego_velocity))
        object.__setattr__(
            self, "class_mix", tuple((int(c), float(w)) for c, w in self.class_mix)
        )
        if self.ego_waypoints is not None:
            object.__setattr__(
                self,
                "ego_waypoints",
                tuple((float(x), float(y)) for x, y in self.ego_waypoints),
            )


@dataclass(frozen=True, eq=False)
class FrameInput:
    """One scenario frame: sweep + ground truth in this frame's ego coordinates."""

    index: int
    timestamp: float
    ego_pose: Pose
    sweep: Sweep
    truth: Tuple[Box3D, ...]


@dataclass(eq=False)
class Scenario:
    spec: ScenarioSpec
    frames: List[FrameInput]

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True, eq=False)
class _WorldObject:
    center0: np.ndarray      # world, z = height/2
    velocity: np.ndarray     # world BEV (vx, vy)
    yaw: float               # world heading
    dims: np.ndarray
    class_id: int

    def center_at(self, t: float) -> np.ndarray:
        return self.center0 + np.array([self.velocity[0], self.velocity[1], 0.0]) * t


def _ego_poses(spec: ScenarioSpec) -> List[Pose]:
    if spec.ego_motion == EgoMotionKind.STATIC:
        return [Pose.identity() for _ in range(spec.n_frames)]
    if spec.ego_motion == EgoMotionKind.CONSTANT_VELOCITY:
        vx, vy = spec.ego_velocity
        yaw = math.atan2(vy, vx) if (vx, vy) != (0.0, 0.0) else 0.0
        return [
            Pose.from_yaw(yaw, (vx * i * spec.frame_dt, vy * i * spec.frame_dt, 0.0))
            for i in range(spec.n_frames)
        ]
    waypoints = list(spec.ego_waypoints or ())
    poses = []
    yaw = 0.0
    for i in range(spec.n_frames):
        x, y = waypoints[min(i, len(waypoints) - 1)]
        if i + 1 < len(waypoints):
            nx, ny = waypoints[i + 1]
            if (nx, ny) != (x, y):
                yaw = math.atan2(ny - y, nx - x)
        poses.append(Pose.from_yaw(yaw, (x, y, 0.0)))
    return poses


def _sample_objects(spec: ScenarioSpec) -> List[_WorldObject]:
    rng = derive_rng(spec.seed, 0)
    class_ids = [c for c, _ in spec.class_mix]
    weights = np.array([w for _, w in spec.class_mix], dtype=float)
    weights = weights / weights.sum() if weights.sum() > 0 else np.full(len(weights), 1 / len(weights))
    objects = []
    for _ in range(spec.n_objects):
        radius = rng.uniform(*spec.spawn_range)
        angle = rng.uniform(0.0, math.tau)
        class_id = int(class_ids[int(rng.choice(len(class_ids), p=weights))])
        base = np.array(_CLASS_BASE_DIMS.get(class_id, _DEFAULT_DIMS))
        dims = base * rng.uniform(0.9, 1.1, size=3)
        speed = min(float(rng.uniform(*spec.speed_range)), spec.max_speed)
        heading = rng.uniform(0.0, math.tau)
        velocity = np.array([speed * math.cos(heading), speed * math.sin(heading)])
        yaw = wrap_angle(heading if speed > 1e-9 else rng.uniform(-math.pi, math.pi))
        center0 = np.array([radius * math.cos(angle), radius * math.sin(angle), dims[2] / 2.0])
        objects.append(_WorldObject(center0, velocity, yaw, dims, class_id))
    return objects


def _truth_in_ego(
    objects: Sequence[_WorldObject], t: float, ego: Pose, max_range: float
) -> List[Box3D]:
    rot_inv = ego.rotation_matrix().T
    ego_yaw = ego.yaw
    cos_e, sin_e = math.cos(-ego_yaw), math.sin(-ego_yaw)
    truth = []
    for obj in objects:
        center_w = obj.center_at(t)
        center_e = rot_inv @ (center_w - ego.translation)
        if math.hypot(center_e[0], center_e[1]) >= max_range:
            continue
        vel_e = np.array(
            [
                cos_e * obj.velocity[0] - sin_e * obj.velocity[1],
                sin_e * obj.velocity[0] + cos_e * obj.velocity[1],
            ]
        )
        truth.append(
            Box3D(
                center=center_e,
                dims=obj.dims.copy(),
                yaw=wrap_angle(obj.yaw - ego_yaw),
                velocity=vel_e,
                class_id=obj.class_id,
                score=1.0,
            )
        )
    return truth


def _sample_points(
    spec: ScenarioSpec, truth: Sequence[Box3D], rng: np.random.Generator
) -> PointCloud:
    xyz_parts: List[np.ndarray] = []
    for box in truth:
        r = max(math.hypot(box.center[0], box.center[1]), _MIN_DENSITY_RANGE)
        expected = spec.points_per_object_k / (r * r)
        n = int(rng.poisson(expected))
        if n == 0:
            continue
        local = rng.uniform(-0.5, 0.5, size=(n, 2)) * box.dims[:2]
        c, s = math.cos(box.yaw), math.sin(box.yaw)
        x = c * local[:, 0] - s * local[:, 1] + box.center[0]
        y = s * local[:, 0] + c * local[:, 1] + box.center[1]
        z = rng.uniform(box.center[2] - box.dims[2] / 2.0, box.center[2] + box.dims[2] / 2.0, size=n)
        xyz_parts.append(np.column_stack([x, y, z]))
    n_clutter = int(rng.poisson(spec.clutter_density * math.pi * spec.max_range**2))
    if n_clutter > 0:
        radius = spec.max_range * np.sqrt(rng.uniform(size=n_clutter))
        angle = rng.uniform(0.0, math.tau, size=n_clutter)
        xyz_parts.append(
            np.column_stack([radius * np.cos(angle), radius * np.sin(angle), np.zeros(n_clutter)])
        )
    if not xyz_parts:
        return PointCloud.empty()
    xyz = np.concatenate(xyz_parts)
    intensity = rng.uniform(size=xyz.shape[0])
    return PointCloud(xyz, intensity, np.zeros(xyz.shape[0]))


def generate_scenario(spec: ScenarioSpec) -> Scenario:
    """Deterministically generate sweeps and per-frame ground truth."""
    poses = _ego_poses(spec)
    objects = _sample_objects(spec)
    frames = []
    for i in range(spec.n_frames):
        t = i * spec.frame_dt
        truth = _truth_in_ego(objects, t, poses[i], spec.max_range)
        points = _sample_points(spec, truth, derive_rng(spec.seed, 1, i))
        sweep = Sweep(timestamp=t, ego_pose=poses[i], points=points)
        frames.append(
            FrameInput(index=i, timestamp=t, ego_pose=poses[i], sweep=sweep, truth=tuple(truth))
        )
    return Scenario(spec, frames)
