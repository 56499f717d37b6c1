import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rangeforge import Box3D, Pose


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_pose(rng, planar=False):
    if planar:
        yaw = rng.uniform(-np.pi, np.pi)
        return Pose.from_yaw(yaw, rng.uniform(-20, 20, size=3))
    q = rng.normal(size=4)
    return Pose(q / np.linalg.norm(q), rng.uniform(-20, 20, size=3))


def random_box(rng, max_range=100.0, n_classes=2, score=None):
    radius = rng.uniform(1.0, max_range)
    angle = rng.uniform(0, 2 * np.pi)
    return Box3D(
        center=np.array([radius * np.cos(angle), radius * np.sin(angle), rng.uniform(0, 2)]),
        dims=rng.uniform(0.5, 6.0, size=3),
        yaw=rng.uniform(-np.pi, np.pi),
        velocity=rng.uniform(-5, 5, size=2),
        class_id=int(rng.integers(n_classes)),
        score=float(rng.uniform()) if score is None else score,
    )
