"""SE(3) poses, frame transforms, ego-motion compensation, and sweep aggregation.

Conventions used throughout the package:

- A ``Pose`` maps coordinates from its *source* frame into its *destination*
  frame (an ego pose maps ego coordinates into world coordinates).
- Rotations are stored as unit quaternions ``[w, x, y, z]``; yaw-only
  constructors cover the planar motion this package actually exercises.
- Yaw angles are normalized to ``(-pi, pi]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "Pose",
    "Point",
    "PointCloud",
    "Sweep",
    "Box3D",
    "wrap_angle",
    "compose",
    "invert_pose",
    "relative_pose",
    "apply_pose",
    "transform_points",
    "aggregate_sweeps",
    "compensate_box",
]

_QUAT_NORM_TOL = 1e-6


def wrap_angle(angle: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    wrapped = math.remainder(float(angle), math.tau)
    if wrapped <= -math.pi:
        return math.pi
    return wrapped


def _quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def _quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def _quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def _quat_to_yaw(q: np.ndarray) -> float:
    w, x, y, z = q
    return math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))


def _matrix_to_quat(m: np.ndarray) -> np.ndarray:
    # Shepperd's method: pick the largest diagonal combination for stability.
    m = np.asarray(m, dtype=float)
    trace = m[0, 0] + m[1, 1] + m[2, 2]
    if trace > 0:
        s = math.sqrt(trace + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    return q / np.linalg.norm(q)


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform from a source frame to a destination frame.

    Attributes:
        rotation: unit quaternion ``[w, x, y, z]``.
        translation: 3-vector, meters.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        q = np.asarray(self.rotation, dtype=float).reshape(4)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(t))):
            raise ValueError("pose has non-finite components")
        norm = float(np.linalg.norm(q))
        if abs(norm - 1.0) > _QUAT_NORM_TOL:
            raise ValueError(f"rotation quaternion norm {norm} is not unit")
        object.__setattr__(self, "rotation", q / norm)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_yaw(cls, yaw: float, translation: Sequence[float] = (0.0, 0.0, 0.0)) -> "Pose":
        half = 0.5 * float(yaw)
        return cls(np.array([math.cos(half), 0.0, 0.0, math.sin(half)]), np.asarray(translation, dtype=float))

    @classmethod
    def from_matrix(cls, rotation: np.ndarray, translation: Sequence[float]) -> "Pose":
        return cls(_matrix_to_quat(rotation), np.asarray(translation, dtype=float))

    def rotation_matrix(self) -> np.ndarray:
        return _quat_to_matrix(self.rotation)

    @property
    def yaw(self) -> float:
        return wrap_angle(_quat_to_yaw(self.rotation))


@dataclass(frozen=True)
class Point:
    """Single LiDAR return in a declared frame."""

    x: float
    y: float
    z: float
    intensity: Optional[float] = None
    dt: Optional[float] = None

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError("point has non-finite coordinates")

    @property
    def xyz(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Columnar collection of points.

    ``dt`` is the per-point time offset (seconds) relative to the timestamp of
    the sweep the cloud is expressed in; it is populated by sweep aggregation
    and is always <= 0.
    """

    xyz: np.ndarray
    intensity: Optional[np.ndarray] = None
    dt: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        xyz = np.asarray(self.xyz, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(xyz)):
            raise ValueError("point cloud has non-finite coordinates")
        object.__setattr__(self, "xyz", xyz)
        for name in ("intensity", "dt"):
            col = getattr(self, name)
            if col is not None:
                col = np.asarray(col, dtype=float).reshape(-1)
                if col.shape[0] != xyz.shape[0]:
                    raise ValueError(f"{name} length {col.shape[0]} != point count {xyz.shape[0]}")
                object.__setattr__(self, name, col)

    def __len__(self) -> int:
        return self.xyz.shape[0]

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)))

    @classmethod
    def from_points(cls, points: Sequence[Point]) -> "PointCloud":
        if not points:
            return cls.empty()
        xyz = np.array([[p.x, p.y, p.z] for p in points])
        intensity = None
        if all(p.intensity is not None for p in points):
            intensity = np.array([p.intensity for p in points])
        dt = None
        if all(p.dt is not None for p in points):
            dt = np.array([p.dt for p in points])
        return cls(xyz, intensity, dt)

    def select(self, mask: np.ndarray) -> "PointCloud":
        return PointCloud(
            self.xyz[mask],
            None if self.intensity is None else self.intensity[mask],
            None if self.dt is None else self.dt[mask],
        )

    @staticmethod
    def concatenate(clouds: Sequence["PointCloud"]) -> "PointCloud":
        if not clouds:
            return PointCloud.empty()
        xyz = np.concatenate([c.xyz for c in clouds])
        intensity = None
        if all(c.intensity is not None for c in clouds):
            intensity = np.concatenate([c.intensity for c in clouds])
        dt = None
        if all(c.dt is not None for c in clouds):
            dt = np.concatenate([c.dt for c in clouds])
        return PointCloud(xyz, intensity, dt)


@dataclass(frozen=True, eq=False)
class Sweep:
    """One LiDAR sweep: points in the ego frame of this sweep's timestamp."""

    timestamp: float
    ego_pose: Pose
    points: PointCloud


@dataclass(frozen=True, eq=False)
class Box3D:
    """Detection or annotation cuboid with BEV velocity.

    ``dims`` is (length, width, height) along the box's local x/y/z at the
    given yaw. ``velocity`` is the BEV (vx, vy) in the frame the box lives in;
    ``None`` means unknown (treated as zero by the forecaster).
    """

    center: np.ndarray
    dims: np.ndarray
    yaw: float
    velocity: Optional[np.ndarray] = None
    class_id: int = 0
    score: float = 1.0

    def __post_init__(self) -> None:
        center = np.asarray(self.center, dtype=float).reshape(3)
        dims = np.asarray(self.dims, dtype=float).reshape(3)
        if not (np.all(np.isfinite(center)) and np.all(np.isfinite(dims))):
            raise ValueError("box has non-finite geometry")
        if np.any(dims <= 0):
            raise ValueError(f"box dims must be strictly positive, got {dims}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"box score {self.score} outside [0, 1]")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))
        if self.velocity is not None:
            vel = np.asarray(self.velocity, dtype=float).reshape(2)
            if not np.all(np.isfinite(vel)):
                raise ValueError("box velocity is non-finite")
            object.__setattr__(self, "velocity", vel)

    @property
    def bev_center(self) -> np.ndarray:
        return self.center[:2]


def compose(outer: Pose, inner: Pose) -> Pose:
    """Return the pose applying ``inner`` first, then ``outer``."""
    rotation = _quat_multiply(outer.rotation, inner.rotation)
    rotation = rotation / np.linalg.norm(rotation)
    translation = outer.rotation_matrix() @ inner.translation + outer.translation
    return Pose(rotation, translation)


def invert_pose(pose: Pose) -> Pose:
    q_inv = _quat_conjugate(pose.rotation)
    t_inv = -(_quat_to_matrix(q_inv) @ pose.translation)
    return Pose(q_inv, t_inv)


def relative_pose(src: Pose, dst: Pose) -> Pose:
    """Pose mapping src-frame coordinates into dst-frame coordinates.

    Both arguments must map into a common parent frame (e.g. two ego->world
    poses).
    """
    return compose(invert_pose(dst), src)


def transform_points(pose: Pose, xyz: np.ndarray) -> np.ndarray:
    """Apply a pose to an (N, 3) coordinate array."""
    xyz = np.asarray(xyz, dtype=float)
    return xyz @ pose.rotation_matrix().T + pose.translation


def apply_pose(pose: Pose, point: Point) -> Point:
    """Transform a point into the pose's destination frame."""
    out = transform_points(pose, point.xyz.reshape(1, 3))[0]
    return Point(float(out[0]), float(out[1]), float(out[2]), point.intensity, point.dt)


def aggregate_sweeps(sweeps: Sequence[Sweep], k: int) -> PointCloud:
    """Union of the last ``k`` sweeps aligned to the most recent ego frame.

    Each output point carries ``dt = timestamp_i - timestamp_latest`` (<= 0).
    Fewer than ``k`` sweeps are allowed at scenario start; all available ones
    are used.
    """
    if not sweeps:
        raise ValueError("aggregate_sweeps requires at least one sweep")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    recent = list(sweeps[-k:])
    stamps = [s.timestamp for s in recent]
    if any(b <= a for a, b in zip(stamps, stamps[1:])):
        raise ValueError("sweep timestamps must strictly increase")
    latest = recent[-1]
    parts = []
    for sweep in recent:
        rel = relative_pose(sweep.ego_pose, latest.ego_pose)
        xyz = transform_points(rel, sweep.points.xyz)
        n = xyz.shape[0]
        dt = np.full(n, sweep.timestamp - latest.timestamp)
        parts.append(PointCloud(xyz, sweep.points.intensity, dt))
    return PointCloud.concatenate(parts)


def compensate_box(box: Box3D, pose_src: Pose, pose_dst: Pose) -> Box3D:
    """Re-express a box from the ego frame of pose_src in that of pose_dst.

    Dims, class and score are untouched; the BEV velocity is rotated by the
    relative yaw so its norm is preserved.
    """
    rel = relative_pose(pose_src, pose_dst)
    center = transform_points(rel, box.center.reshape(1, 3))[0]
    rel_yaw = rel.yaw
    velocity = box.velocity
    if velocity is not None:
        c, s = math.cos(rel_yaw), math.sin(rel_yaw)
        velocity = np.array([c * velocity[0] - s * velocity[1], s * velocity[0] + c * velocity[1]])
    return replace(box, center=center, yaw=wrap_angle(box.yaw + rel_yaw), velocity=velocity)
