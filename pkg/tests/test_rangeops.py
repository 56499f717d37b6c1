import math

import numpy as np
import pytest

from rangeforge import (
    Box3D,
    Point,
    PointCloud,
    RangeBand,
    RangeMode,
    donut_crop,
    filter_detections_by_band,
    grid_side,
    occupancy_by_ring,
    radial_range,
    radial_ranges,
    voxelize,
)
from rangeforge.rangeops import SparsePillarGrid


class TestRadialRange:
    def test_345_triangle(self):
        assert radial_range(Point(3.0, 4.0, 10.0), RangeMode.BEV_L2) == pytest.approx(5.0)

    def test_linf(self):
        assert radial_range(Point(3.0, 4.0, 10.0), RangeMode.BEV_LINF) == pytest.approx(4.0)

    def test_z_never_participates(self):
        for mode in RangeMode:
            assert radial_range(Point(0.0, 0.0, 123.0), mode) == 0.0

    def test_vectorized_matches_scalar(self, rng):
        xyz = rng.uniform(-100, 100, size=(50, 3))
        for mode in RangeMode:
            vec = radial_ranges(xyz, mode)
            for row, r in zip(xyz, vec):
                assert r == pytest.approx(radial_range(Point(*row), mode))


def _cloud_at_ranges(ranges):
    xyz = np.array([[r, 0.0, 1.0] for r in ranges])
    return PointCloud(xyz)


class TestDonutCrop:
    def test_full_band_identity(self, rng):
        cloud = PointCloud(rng.uniform(-80, 80, size=(40, 3)))
        out = donut_crop(cloud, RangeBand(0.0, math.inf))
        assert np.array_equal(out.xyz, cloud.xyz)

    def test_boundary_convention_inner_inclusive(self):
        cloud = _cloud_at_ranges([49.9, 50.0, 99.9, 100.0])
        out = donut_crop(cloud, RangeBand(50.0, 100.0))
        assert sorted(out.xyz[:, 0]) == [50.0, 99.9]

    def test_complement_partition(self, rng):
        # |crop([0,a))| + |crop([a,inf))| == |cloud| for random clouds.
        for _ in range(10):
            cloud = PointCloud(rng.uniform(-120, 120, size=(200, 3)))
            a = rng.uniform(10, 110)
            lo = donut_crop(cloud, RangeBand(0.0, a))
            hi = donut_crop(cloud, RangeBand(a, math.inf))
            assert len(lo) + len(hi) == len(cloud)

    def test_idempotent(self, rng):
        cloud = PointCloud(rng.uniform(-80, 80, size=(100, 3)))
        band = RangeBand(20.0, 60.0)
        once = donut_crop(cloud, band)
        twice = donut_crop(once, band)
        assert np.array_equal(once.xyz, twice.xyz)

    def test_order_preserved(self):
        cloud = _cloud_at_ranges([70.0, 30.0, 55.0, 90.0])
        out = donut_crop(cloud, RangeBand(50.0, 100.0))
        assert list(out.xyz[:, 0]) == [70.0, 55.0, 90.0]


class TestVoxelize:
    def test_side_50_8(self):
        assert grid_side(50, 8) == 800
        grid = voxelize(PointCloud.empty(), 50, 8)
        assert grid.side == 800

    def test_iso_area_triples(self):
        # (50,8), (100,4), (200,2) all give side 800 and equal grid area.
        assert grid_side(100, 4) == 800
        assert grid_side(200, 2) == 800

    def test_iso_area_law_exact(self, rng):
        for _ in range(50):
            r = rng.uniform(1, 300)
            s = rng.uniform(0.5, 20)
            assert grid_side(r, s) == grid_side(2 * r, s / 2)

    def test_origin_maps_to_center_cell(self):
        grid = voxelize(PointCloud(np.array([[0.0, 0.0, 0.0]])), 50, 8)
        assert grid.occupied == {(400, 400): 1}

    def test_point_count_conservation(self, rng):
        xyz = rng.uniform(-70, 70, size=(500, 3))
        r = 50.0
        grid = voxelize(PointCloud(xyz), r, 8)
        inside = np.sum(
            (xyz[:, 0] >= -r) & (xyz[:, 0] < r) & (xyz[:, 1] >= -r) & (xyz[:, 1] < r)
        )
        assert grid.total_points == inside

    def test_edge_points_dropped(self):
        # x == +r falls outside the half-open cells.
        grid = voxelize(PointCloud(np.array([[50.0, 0.0, 0.0], [-50.0, 0.0, 0.0]])), 50, 8)
        assert grid.total_points == 1
        assert grid.occupied == {(0, 400): 1}

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            voxelize(PointCloud.empty(), 0, 8)
        with pytest.raises(ValueError):
            voxelize(PointCloud.empty(), 50, -1)


class TestOccupancyByRing:
    def test_empty_grid_all_zero(self):
        grid = voxelize(PointCloud.empty(), 50, 2)
        rings = occupancy_by_ring(grid, 10.0)
        assert rings and all(r.fraction == 0.0 for r in rings)

    def test_full_grid_all_one(self):
        side = grid_side(10, 1)
        occupied = {(i, j): 1 for i in range(side) for j in range(side)}
        grid = SparsePillarGrid(10.0, 1.0, side, occupied)
        rings = occupancy_by_ring(grid, 5.0)
        for ring in rings:
            if not ring.empty:
                assert ring.fraction == 1.0

    def test_beyond_corner_flagged_empty(self):
        grid = voxelize(PointCloud(np.array([[0.0, 0.0, 0.0]])), 10, 1)
        rings = occupancy_by_ring(grid, 5.0, n_rings=10)
        # Corner cell centers reach ~13.4m; rings past that hold no cells.
        assert rings[-1].empty and rings[-1].fraction == 0.0
        assert not rings[0].empty

    def test_inverse_square_density_decreasing(self):
        # Point density ~ 1/range^2 must produce (mostly) non-increasing ring
        # occupancy; majority over 20 seeds strictly decreasing in the inner rings.
        decreasing = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            n = 4000
            radius = rng.uniform(2, 150, size=n)
            density = 1.0 / radius**2
            keep = rng.uniform(size=n) < density / density.max()
            angle = rng.uniform(0, 2 * np.pi, size=n)
            xyz = np.column_stack(
                [radius * np.cos(angle), radius * np.sin(angle), np.zeros(n)]
            )[keep]
            grid = voxelize(PointCloud(xyz), 150, 2)
            rings = occupancy_by_ring(grid, 30.0)[:5]
            fracs = [r.fraction for r in rings]
            inversions = sum(1 for a, b in zip(fracs, fracs[1:]) if b > a)
            if inversions <= 1:
                decreasing += 1
        assert decreasing >= 15

    def test_ring_width_validation(self):
        grid = voxelize(PointCloud.empty(), 10, 1)
        with pytest.raises(ValueError):
            occupancy_by_ring(grid, 0.0)


def _det(r, class_id=0, score=0.5):
    return Box3D(
        center=np.array([r, 0.0, 0.0]),
        dims=np.ones(3),
        yaw=0.0,
        velocity=np.zeros(2),
        class_id=class_id,
        score=score,
    )


class TestFilterDetectionsByBand:
    def test_full_band_identity(self):
        dets = [_det(r) for r in (1, 50, 120)]
        assert filter_detections_by_band(dets, RangeBand(0, math.inf)) == dets

    def test_boundary_convention(self):
        dets = [_det(r) for r in (10, 50, 99, 150)]
        kept = filter_detections_by_band(dets, RangeBand(50, 100))
        assert [d.center[0] for d in kept] == [50, 99]

    def test_disjoint_cover_partitions(self, rng):
        from conftest import random_box

        dets = [random_box(rng, max_range=149.0) for _ in range(60)]
        bands = [RangeBand(0, 50), RangeBand(50, 100), RangeBand(100, 150)]
        pieces = [filter_detections_by_band(dets, b) for b in bands]
        assert sum(len(p) for p in pieces) == len(dets)
        seen = {id(d) for p in pieces for d in p}
        assert len(seen) == len(dets)
