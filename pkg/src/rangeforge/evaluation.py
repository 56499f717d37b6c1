"""Detection matching, AP, TP error metrics, CDS/NDS composites, cohort reports.

Matching follows the center-distance convention: a detection is a true
positive when its BEV center lies within a distance threshold of an unmatched
ground-truth box of the same class, assigned greedily by descending score.
AP is the area under the precision-recall curve via 101-point interpolation,
averaged over the distance thresholds. Per-band cohorts filter both
detections and ground truth to the band before matching, so bands are
evaluated independently of each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .detector import StageTimings
from .geometry import Box3D, wrap_angle
from .rangeops import RangeBand, RangeMode, filter_detections_by_band

__all__ = [
    "MatchSpec",
    "MatchResult",
    "TpErrors",
    "CompositeMetric",
    "ClassEval",
    "BandReport",
    "LatencyStats",
    "CohortReport",
    "match_frame",
    "average_precision",
    "tp_errors",
    "composite_scores",
    "evaluate_cohorts",
    "latency_stats",
]


@dataclass(frozen=True)
class MatchSpec:
    """Matching thresholds and TP-error normalizers."""

    thresholds: Tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
    tp_threshold: float = 2.0
    recall_points: int = 101
    ate_cap: float = 2.0
    ase_cap: float = 1.0
    aoe_cap: float = math.pi
    ave_cap: float = 2.0

    def __post_init__(self) -> None:
        ths = tuple(float(t) for t in self.thresholds)
        if not ths or any(t <= 0 for t in ths) or any(b <= a for a, b in zip(ths, ths[1:])):
            raise ValueError(f"thresholds must be strictly increasing and positive: {ths}")
        object.__setattr__(self, "thresholds", ths)
        if self.tp_threshold <= 0:
            raise ValueError("tp_threshold must be positive")


@dataclass(eq=False)
class MatchResult:
    """TP/FP flags per detection (input order) and matched (det, gt) index pairs."""

    tp_flags: np.ndarray
    pairs: List[Tuple[int, int]]


def match_frame(dets: Sequence[Box3D], gts: Sequence[Box3D], thresh: float) -> MatchResult:
    """Greedy center-distance matching within one frame.

    Detections are visited by descending score (ties broken by input index);
    each takes the nearest unmatched same-class ground truth within ``thresh``.
    """
    tp = np.zeros(len(dets), dtype=bool)
    pairs: List[Tuple[int, int]] = []
    taken = [False] * len(gts)
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    for i in order:
        det = dets[i]
        best_g = -1
        best_d = math.inf
        for g, gt in enumerate(gts):
            if taken[g] or gt.class_id != det.class_id:
                continue
            d = math.hypot(det.center[0] - gt.center[0], det.center[1] - gt.center[1])
            if d <= thresh and d < best_d:
                best_g, best_d = g, d
        if best_g >= 0:
            taken[best_g] = True
            tp[i] = True
            pairs.append((i, best_g))
    return MatchResult(tp, pairs)


def average_precision(
    tp_flags: Sequence[bool], scores: Sequence[float], gt_count: int, recall_points: int = 101
) -> Optional[float]:
    """Area under the PR curve by N-point interpolation.

    Returns None when gt_count == 0 (undefined; excluded from means upstream).
    """
    if gt_count < 0:
        raise ValueError("gt_count must be >= 0")
    if gt_count == 0:
        return None
    flags = np.asarray(tp_flags, dtype=bool)
    sc = np.asarray(scores, dtype=float)
    n = flags.shape[0]
    if n == 0:
        return 0.0
    order = np.lexsort((np.arange(n), -sc))
    cum_tp = np.cumsum(flags[order])
    precision = cum_tp / np.arange(1, n + 1)
    recall = cum_tp / gt_count
    # Interpolated precision: max precision at any recall >= r.
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    grid = np.linspace(0.0, 1.0, recall_points)
    idx = np.searchsorted(recall, grid, side="left")
    interp = np.where(idx < n, envelope[np.minimum(idx, n - 1)], 0.0)
    return float(np.mean(interp))


@dataclass(frozen=True)
class TpErrors:
    """Mean true-positive errors; reported at their caps when nothing matched."""

    ate: float
    ase: float
    aoe: float
    ave: float
    matched: int

    @property
    def no_matches(self) -> bool:
        return self.matched == 0


def tp_errors(pairs: Sequence[Tuple[Box3D, Box3D]], spec: MatchSpec = MatchSpec()) -> TpErrors:
    """ATE/ASE/AOE/AVE over matched (detection, ground truth) pairs."""
    if not pairs:
        return TpErrors(spec.ate_cap, spec.ase_cap, spec.aoe_cap, spec.ave_cap, 0)
    ate = ase = aoe = ave = 0.0
    for det, gt in pairs:
        ate += math.hypot(det.center[0] - gt.center[0], det.center[1] - gt.center[1])
        ratio = 1.0
        for a, b in zip(det.dims, gt.dims):
            ratio *= min(a, b) / max(a, b)
        ase += 1.0 - ratio
        aoe += abs(wrap_angle(det.yaw - gt.yaw))
        dv = (det.velocity if det.velocity is not None else np.zeros(2)) - (
            gt.velocity if gt.velocity is not None else np.zeros(2)
        )
        ave += float(np.hypot(dv[0], dv[1]))
    n = len(pairs)
    return TpErrors(float(ate / n), float(ase / n), float(aoe / n), float(ave / n), n)


class CompositeMetric(str, Enum):
    CDS = "cds"
    NDS = "nds"


def composite_scores(
    ap: float, errors: TpErrors, metric: CompositeMetric = CompositeMetric.CDS, spec: MatchSpec = MatchSpec()
) -> float:
    """Composite score from AP and normalized TP-error complements.

    CDS multiplies AP by the mean complement of (ATE, ASE, AOE); the NDS-style
    score is the weighted sum (5*AP + sum of complements incl. AVE) / 10.
    """
    comp_ate = 1.0 - min(errors.ate, spec.ate_cap) / spec.ate_cap
    comp_ase = 1.0 - min(errors.ase, spec.ase_cap) / spec.ase_cap
    comp_aoe = 1.0 - min(errors.aoe, spec.aoe_cap) / spec.aoe_cap
    if metric == CompositeMetric.CDS:
        return float(ap * (comp_ate + comp_ase + comp_aoe) / 3.0)
    if metric == CompositeMetric.NDS:
        comp_ave = 1.0 - min(errors.ave, spec.ave_cap) / spec.ave_cap
        return float((5.0 * ap + comp_ate + comp_ase + comp_aoe + comp_ave) / 10.0)
    raise ValueError(f"unknown composite metric {metric!r}")


@dataclass(frozen=True)
class ClassEval:
    """Per-class metrics in one range band."""

    ap: float
    ate: float
    ase: float
    aoe: float
    ave: float
    cds: float
    nds: float
    support: int
    tp_count: int
    no_matches: bool


@dataclass(frozen=True)
class BandReport:
    band: RangeBand
    classes: Dict[int, ClassEval]
    excluded_classes: Tuple[int, ...]
    aggregate: Optional[ClassEval]

    def __post_init__(self) -> None:
        object.__setattr__(self, "excluded_classes", tuple(self.excluded_classes))


@dataclass(frozen=True)
class LatencyStats:
    """Mean and population std of frame totals, plus per-stage means (ms)."""

    mean_ms: float
    std_ms: float
    stage_means: Dict[str, float]


@dataclass(frozen=True)
class CohortReport:
    method: str
    range_mode: str
    match: MatchSpec
    bands: Tuple[BandReport, ...]
    latency: Optional[LatencyStats]
    n_frames: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "bands", tuple(self.bands))

    def band(self, label: str) -> BandReport:
        for report in self.bands:
            if report.band.label == label:
                return report
        raise KeyError(f"no band {label!r} in report; have {[b.band.label for b in self.bands]}")


def _evaluate_class(
    dets_per_frame: Sequence[List[Box3D]],
    gts_per_frame: Sequence[List[Box3D]],
    class_id: int,
    spec: MatchSpec,
) -> Optional[ClassEval]:
    class_dets = [[d for d in dets if d.class_id == class_id] for dets in dets_per_frame]
    class_gts = [[g for g in gts if g.class_id == class_id] for gts in gts_per_frame]
    support = sum(len(g) for g in class_gts)
    if support == 0:
        return None
    aps = []
    for thresh in spec.thresholds:
        flags: List[bool] = []
        scores: List[float] = []
        for dets, gts in zip(class_dets, class_gts):
            result = match_frame(dets, gts, thresh)
            flags.extend(bool(f) for f in result.tp_flags)
            scores.extend(d.score for d in dets)
        aps.append(average_precision(flags, scores, support, spec.recall_points))
    ap = float(np.mean([a for a in aps if a is not None]))
    pairs: List[Tuple[Box3D, Box3D]] = []
    for dets, gts in zip(class_dets, class_gts):
        result = match_frame(dets, gts, spec.tp_threshold)
        pairs.extend((dets[i], gts[g]) for i, g in result.pairs)
    errors = tp_errors(pairs, spec)
    return ClassEval(
        ap=ap,
        ate=errors.ate,
        ase=errors.ase,
        aoe=errors.aoe,
        ave=errors.ave,
        cds=composite_scores(ap, errors, CompositeMetric.CDS, spec),
        nds=composite_scores(ap, errors, CompositeMetric.NDS, spec),
        support=support,
        tp_count=errors.matched,
        no_matches=errors.no_matches,
    )


def _aggregate(classes: Dict[int, ClassEval]) -> Optional[ClassEval]:
    if not classes:
        return None
    vals = list(classes.values())
    mean = lambda key: float(np.mean([getattr(v, key) for v in vals]))
    return ClassEval(
        ap=mean("ap"),
        ate=mean("ate"),
        ase=mean("ase"),
        aoe=mean("aoe"),
        ave=mean("ave"),
        cds=mean("cds"),
        nds=mean("nds"),
        support=sum(v.support for v in vals),
        tp_count=sum(v.tp_count for v in vals),
        no_matches=all(v.no_matches for v in vals),
    )


def evaluate_cohorts(
    dets_per_frame: Sequence[Sequence[Box3D]],
    gts_per_frame: Sequence[Sequence[Box3D]],
    bands: Sequence[RangeBand],
    spec: MatchSpec = MatchSpec(),
    range_mode: RangeMode = RangeMode.BEV_L2,
    timings: Optional[Sequence[StageTimings]] = None,
    method: str = "",
) -> CohortReport:
    """Per-band, per-class evaluation with the full-range union band appended.

    Both detections and ground truth are filtered to each band before
    matching, so a detection can never match a ground truth in another band.
    Classes without ground truth in a band are excluded and flagged.
    """
    if len(dets_per_frame) != len(gts_per_frame):
        raise ValueError("detections and ground truth must cover the same frames")
    if not bands:
        raise ValueError("at least one evaluation band is required")
    all_bands = list(bands)
    union = RangeBand(min(b.inner for b in bands), max(b.outer for b in bands))
    if union not in all_bands:
        all_bands.append(union)
    class_ids = sorted(
        {g.class_id for gts in gts_per_frame for g in gts}
        | {d.class_id for dets in dets_per_frame for d in dets}
    )
    band_reports = []
    for band in all_bands:
        band_dets = [filter_detections_by_band(dets, band, range_mode) for dets in dets_per_frame]
        band_gts = [filter_detections_by_band(gts, band, range_mode) for gts in gts_per_frame]
        classes: Dict[int, ClassEval] = {}
        excluded: List[int] = []
        for class_id in class_ids:
            result = _evaluate_class(band_dets, band_gts, class_id, spec)
            if result is None:
                excluded.append(class_id)
            else:
                classes[class_id] = result
        band_reports.append(BandReport(band, classes, tuple(excluded), _aggregate(classes)))
    latency = latency_stats(timings) if timings else None
    return CohortReport(
        method=method,
        range_mode=range_mode.value,
        match=spec,
        bands=tuple(band_reports),
        latency=latency,
        n_frames=len(dets_per_frame),
    )


def latency_stats(timings: Sequence[StageTimings]) -> LatencyStats:
    """Mean and population standard deviation of per-frame totals."""
    if not timings:
        raise ValueError("latency_stats requires at least one frame")
    totals = np.array([t.total() for t in timings])
    stage_means = {
        stage: float(np.mean([t.as_dict()[stage] for t in timings]))
        for stage in ("point_proc", "backbone", "neck", "head", "post_proc")
    }
    return LatencyStats(float(np.mean(totals)), float(np.std(totals)), stage_means)
