"""Range bands, donut-hole cropping, pillar voxelization, and radial sparsity stats.

Band boundaries are inner-inclusive / outer-exclusive everywhere so that a
disjoint cover of bands partitions points and detections exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from .geometry import Box3D, Point, PointCloud

__all__ = [
    "RangeMode",
    "RangeBand",
    "SparsePillarGrid",
    "RingOccupancy",
    "radial_range",
    "radial_ranges",
    "donut_crop",
    "voxelize",
    "grid_side",
    "occupancy_by_ring",
    "filter_detections_by_band",
]


class RangeMode(str, Enum):
    """BEV range metric: L2 is radial distance, Linf the square-grid bound."""

    BEV_L2 = "l2"
    BEV_LINF = "linf"


def radial_ranges(xyz: np.ndarray, mode: RangeMode = RangeMode.BEV_L2) -> np.ndarray:
    """Vectorized BEV range of an (N, 2) or (N, 3) coordinate array. z never participates."""
    xy = np.asarray(xyz, dtype=float)[:, :2]
    if mode == RangeMode.BEV_L2:
        return np.hypot(xy[:, 0], xy[:, 1])
    if mode == RangeMode.BEV_LINF:
        return np.max(np.abs(xy), axis=1)
    raise ValueError(f"unknown range mode {mode!r}")


def radial_range(p: Union[Point, Sequence[float]], mode: RangeMode = RangeMode.BEV_L2) -> float:
    if isinstance(p, Point):
        x, y = p.x, p.y
    else:
        x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError("non-finite point")
    if mode == RangeMode.BEV_L2:
        return math.hypot(x, y)
    if mode == RangeMode.BEV_LINF:
        return max(abs(x), abs(y))
    raise ValueError(f"unknown range mode {mode!r}")


@dataclass(frozen=True)
class RangeBand:
    """Half-open annulus [inner, outer) in meters; outer may be inf."""

    inner: float
    outer: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.inner < self.outer):
            raise ValueError(f"invalid range band [{self.inner}, {self.outer})")

    def contains(self, ranges: np.ndarray) -> np.ndarray:
        r = np.asarray(ranges, dtype=float)
        return (r >= self.inner) & (r < self.outer)

    @property
    def label(self) -> str:
        outer = "inf" if math.isinf(self.outer) else f"{self.outer:g}"
        return f"{self.inner:g}-{outer}m"


def donut_crop(cloud: PointCloud, band: RangeBand, mode: RangeMode = RangeMode.BEV_L2) -> PointCloud:
    """Retain exactly the points whose BEV range falls in [inner, outer); order preserved."""
    if len(cloud) == 0:
        return cloud
    return cloud.select(band.contains(radial_ranges(cloud.xyz, mode)))


def grid_side(range_m: float, voxel_reciprocal: float) -> int:
    """Cell count per grid edge: round(2 * r * s)."""
    return int(round(2.0 * range_m * voxel_reciprocal))


@dataclass(frozen=True, eq=False)
class SparsePillarGrid:
    """Sparse BEV pillar occupancy over the square [-r, r)^2.

    ``occupied`` maps cell index (i, j) -> point count; indices follow
    i = floor((x + r) * s), j = floor((y + r) * s).
    """

    range_m: float
    voxel_reciprocal: float
    side: int
    occupied: Dict[Tuple[int, int], int]

    @property
    def occupied_count(self) -> int:
        return len(self.occupied)

    @property
    def total_points(self) -> int:
        return sum(self.occupied.values())

    @property
    def total_cells(self) -> int:
        return self.side * self.side

    def cell_center(self, i: int, j: int) -> Tuple[float, float]:
        s = self.voxel_reciprocal
        return ((i + 0.5) / s - self.range_m, (j + 0.5) / s - self.range_m)


def voxelize(cloud: PointCloud, range_m: float, voxel_reciprocal: float) -> SparsePillarGrid:
    """Bin points into BEV pillars; points outside [-r, r)^2 are dropped."""
    if range_m <= 0 or voxel_reciprocal <= 0:
        raise ValueError("range and voxel reciprocal must be positive")
    side = grid_side(range_m, voxel_reciprocal)
    occupied: Dict[Tuple[int, int], int] = {}
    if len(cloud) > 0 and side > 0:
        ij = np.floor((cloud.xyz[:, :2] + range_m) * voxel_reciprocal).astype(np.int64)
        keep = (ij[:, 0] >= 0) & (ij[:, 0] < side) & (ij[:, 1] >= 0) & (ij[:, 1] < side)
        ij = ij[keep]
        if ij.shape[0] > 0:
            flat = ij[:, 0] * side + ij[:, 1]
            uniq, counts = np.unique(flat, return_counts=True)
            occupied = {
                (int(f // side), int(f % side)): int(c) for f, c in zip(uniq, counts)
            }
    return SparsePillarGrid(float(range_m), float(voxel_reciprocal), side, occupied)


@dataclass(frozen=True)
class RingOccupancy:
    """Occupied-cell fraction of one BEV annulus (cell centers, L2)."""

    band: RangeBand
    fraction: float
    occupied_cells: int
    total_cells: int
    empty: bool


def _ring_cell_totals(grid: SparsePillarGrid, ring_width: float, n_rings: int) -> np.ndarray:
    totals = np.zeros(n_rings, dtype=np.int64)
    side, s, r = grid.side, grid.voxel_reciprocal, grid.range_m
    centers = (np.arange(side) + 0.5) / s - r
    # Row-chunked to bound memory on large grids.
    chunk = max(1, 2_000_000 // max(side, 1))
    for start in range(0, side, chunk):
        x = centers[start : start + chunk, None]
        rr = np.hypot(x, centers[None, :])
        idx = (rr // ring_width).astype(np.int64).ravel()
        idx = idx[idx < n_rings]
        totals += np.bincount(idx, minlength=n_rings)
    return totals


def occupancy_by_ring(
    grid: SparsePillarGrid, ring_width: float, n_rings: int | None = None
) -> List[RingOccupancy]:
    """Occupied fraction per annulus of width ``ring_width``.

    Rings beyond the grid corners hold no cells; they are reported with
    fraction 0 and ``empty=True``.
    """
    if ring_width <= 0:
        raise ValueError("ring_width must be positive")
    if grid.side == 0:
        return []
    corner = grid.cell_center(grid.side - 1, grid.side - 1)
    max_center_r = math.hypot(*corner)
    if n_rings is None:
        n_rings = int(max_center_r // ring_width) + 1
    totals = _ring_cell_totals(grid, ring_width, n_rings)
    occ = np.zeros(n_rings, dtype=np.int64)
    if grid.occupied:
        keys = np.array(list(grid.occupied.keys()), dtype=float)
        cx = (keys[:, 0] + 0.5) / grid.voxel_reciprocal - grid.range_m
        cy = (keys[:, 1] + 0.5) / grid.voxel_reciprocal - grid.range_m
        idx = (np.hypot(cx, cy) // ring_width).astype(np.int64)
        idx = idx[idx < n_rings]
        occ += np.bincount(idx, minlength=n_rings)
    rings = []
    for k in range(n_rings):
        band = RangeBand(k * ring_width, (k + 1) * ring_width)
        total = int(totals[k])
        frac = float(occ[k]) / total if total > 0 else 0.0
        rings.append(RingOccupancy(band, frac, int(occ[k]), total, total == 0))
    return rings


def filter_detections_by_band(
    dets: Sequence[Box3D], band: RangeBand, mode: RangeMode = RangeMode.BEV_L2
) -> List[Box3D]:
    """Keep boxes whose center's BEV range falls in [inner, outer); order preserved."""
    out = []
    for det in dets:
        r = radial_range(det.bev_center, mode)
        if band.inner <= r < band.outer:
            out.append(det)
    return out
