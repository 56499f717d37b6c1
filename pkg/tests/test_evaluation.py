import itertools
import math

import numpy as np
import pytest

from rangeforge import (
    Box3D,
    CompositeMetric,
    MatchSpec,
    RangeBand,
    StageTimings,
    average_precision,
    composite_scores,
    evaluate_cohorts,
    latency_stats,
    match_frame,
    tp_errors,
)
from rangeforge.evaluation import TpErrors

from reference import ref_average_precision, ref_cds, ref_greedy_match


def _box(x, y=0.0, score=1.0, class_id=0, yaw=0.0, dims=(4.0, 2.0, 1.5), velocity=(0.0, 0.0)):
    return Box3D(
        center=np.array([x, y, 0.0]),
        dims=np.array(dims, dtype=float),
        yaw=yaw,
        velocity=np.array(velocity, dtype=float),
        class_id=class_id,
        score=score,
    )


class TestMatchFrame:
    def test_exact_hit(self):
        res = match_frame([_box(10.0, score=0.9)], [_box(10.0)], 2.0)
        assert list(res.tp_flags) == [True]
        assert res.pairs == [(0, 0)]

    def test_miss_beyond_threshold(self):
        res = match_frame([_box(13.0, score=0.9)], [_box(10.0)], 2.0)
        assert list(res.tp_flags) == [False]
        assert res.pairs == []

    def test_greedy_by_score_hand_trace(self):
        # 0.9-det at 1.5m takes the single GT; the closer 0.8-det becomes FP.
        dets = [_box(11.5, score=0.9), _box(10.1, score=0.8)]
        res = match_frame(dets, [_box(10.0)], 2.0)
        assert list(res.tp_flags) == [True, False]

    def test_class_aware(self):
        res = match_frame([_box(10.0, score=0.9, class_id=1)], [_box(10.0, class_id=0)], 2.0)
        assert list(res.tp_flags) == [False]

    def test_each_gt_matched_once(self):
        dets = [_box(10.0, score=0.9), _box(10.2, score=0.8)]
        res = match_frame(dets, [_box(10.0)], 2.0)
        assert list(res.tp_flags) == [True, False]

    def test_matches_reference_on_random_instances(self, rng):
        from conftest import random_box

        for _ in range(300):
            dets = [random_box(rng, max_range=30.0) for _ in range(int(rng.integers(0, 9)))]
            gts = [random_box(rng, max_range=30.0, score=1.0) for _ in range(int(rng.integers(0, 6)))]
            thresh = float(rng.uniform(1, 15))
            res = match_frame(dets, gts, thresh)
            ref_tp, ref_pairs = ref_greedy_match(dets, gts, thresh)
            assert list(res.tp_flags) == ref_tp
            assert res.pairs == ref_pairs

    def test_permutation_invariance_distinct_scores(self, rng):
        from conftest import random_box

        for _ in range(20):
            n = int(rng.integers(2, 6))
            dets = [random_box(rng, max_range=20.0) for _ in range(n)]
            scores = rng.permutation(np.linspace(0.1, 0.9, n))
            dets = [
                Box3D(d.center, d.dims, d.yaw, d.velocity, d.class_id, float(s))
                for d, s in zip(dets, scores)
            ]
            gts = [random_box(rng, max_range=20.0, score=1.0) for _ in range(3)]
            base = match_frame(dets, gts, 5.0)
            flag_of = {id(d): f for d, f in zip(dets, base.tp_flags)}
            for perm in itertools.permutations(range(n)):
                shuffled = [dets[i] for i in perm]
                res = match_frame(shuffled, gts, 5.0)
                assert [flag_of[id(d)] for d in shuffled] == list(res.tp_flags)


class TestAveragePrecision:
    def test_perfect(self):
        assert average_precision([True, True], [0.9, 0.8], 2) == 1.0

    def test_no_detections(self):
        assert average_precision([], [], 3) == 0.0

    def test_undefined_without_gt(self):
        assert average_precision([True], [0.9], 0) is None

    def test_tp_fp_tp_matches_brute_force(self):
        flags = [True, False, True]
        scores = [0.9, 0.8, 0.7]
        got = average_precision(flags, scores, 2)
        ref = ref_average_precision(flags, scores, 2)
        assert got == pytest.approx(ref, abs=1e-9)

    def test_random_instances_match_brute_force(self, rng):
        for _ in range(200):
            n = int(rng.integers(0, 10))
            flags = list(rng.uniform(size=n) < 0.5)
            scores = list(rng.uniform(size=n))
            gt = int(rng.integers(1, 7))
            got = average_precision(flags, scores, gt)
            ref = ref_average_precision(flags, scores, gt)
            assert got == pytest.approx(ref, abs=1e-9)

    def test_rank_invariance_under_monotone_rescale(self, rng):
        n = 12
        flags = list(rng.uniform(size=n) < 0.6)
        scores = np.sort(rng.uniform(size=n))[::-1]  # distinct with prob 1
        gt = 7
        base = average_precision(flags, list(scores), gt)
        squeezed = average_precision(flags, list(0.1 + 0.5 * scores**3), gt)
        assert base == pytest.approx(squeezed, abs=1e-12)


class TestTpErrors:
    def test_identical_boxes_zero(self):
        e = tp_errors([(_box(10.0), _box(10.0))])
        assert (e.ate, e.ase, e.aoe, e.ave) == (0.0, 0.0, 0.0, 0.0)

    def test_ase_dim_ratio(self):
        # dims (4,2,2) vs (4,2,1): aligned-IoU proxy 1*1*(1/2) -> ASE 0.5.
        det = _box(0.0, dims=(4, 2, 2))
        gt = _box(0.0, dims=(4, 2, 1))
        assert tp_errors([(det, gt)]).ase == pytest.approx(0.5)

    def test_aoe_wraparound(self):
        det = _box(0.0, yaw=math.pi - 0.1)
        gt = _box(0.0, yaw=-math.pi + 0.1)
        assert tp_errors([(det, gt)]).aoe == pytest.approx(0.2, abs=1e-12)

    def test_ave_l2(self):
        det = _box(0.0, velocity=(3.0, 0.0))
        gt = _box(0.0, velocity=(0.0, 4.0))
        assert tp_errors([(det, gt)]).ave == pytest.approx(5.0)

    def test_zero_matches_reports_caps(self):
        e = tp_errors([])
        assert e.no_matches
        assert (e.ate, e.ase, e.aoe, e.ave) == (2.0, 1.0, math.pi, 2.0)


class TestCompositeScores:
    def test_zero_errors_equal_ap(self):
        e = TpErrors(0.0, 0.0, 0.0, 0.0, 5)
        assert composite_scores(0.5, e) == 0.5

    def test_maximal_errors_zero(self):
        e = TpErrors(2.0, 1.0, math.pi, 2.0, 5)
        assert composite_scores(1.0, e) == 0.0

    def test_hand_computed_example(self):
        # 0.6 * (0.75 + 0.8 + 0.75) / 3 = 0.46
        e = TpErrors(0.5, 0.2, math.pi / 4, 0.0, 5)
        assert composite_scores(0.6, e) == pytest.approx(0.46)

    def test_cds_never_exceeds_ap(self, rng):
        for _ in range(100):
            e = TpErrors(*rng.uniform(0, 3, size=4), matched=1)
            ap = float(rng.uniform())
            cds = composite_scores(ap, e)
            assert cds <= ap + 1e-15
            assert cds == pytest.approx(ref_cds(ap, e.ate, e.ase, e.aoe), abs=1e-12)

    def test_nds_formula(self):
        e = TpErrors(0.0, 0.0, 0.0, 0.0, 5)
        assert composite_scores(1.0, e, CompositeMetric.NDS) == pytest.approx(0.9)
        e = TpErrors(2.0, 1.0, math.pi, 2.0, 5)
        assert composite_scores(1.0, e, CompositeMetric.NDS) == pytest.approx(0.5)


class TestEvaluateCohorts:
    def test_single_band_equals_whole_scene(self):
        dets = [[_box(10.0, score=0.9), _box(70.0, score=0.6)]]
        gts = [[_box(10.0), _box(70.0)]]
        full = evaluate_cohorts(dets, gts, [RangeBand(0, math.inf)])
        assert len(full.bands) == 1
        agg = full.bands[0].aggregate
        assert agg.ap == 1.0 and agg.cds == 1.0

    def test_perfect_oracle_every_band(self):
        dets = [[_box(10.0, score=0.9), _box(70.0, score=0.8), _box(120.0, score=0.7)]]
        gts = [[_box(10.0), _box(70.0), _box(120.0)]]
        bands = [RangeBand(0, 50), RangeBand(50, 100), RangeBand(100, 150)]
        report = evaluate_cohorts(dets, gts, bands)
        assert [b.band.label for b in report.bands] == ["0-50m", "50-100m", "100-150m", "0-150m"]
        for band in report.bands:
            assert band.aggregate.ap == 1.0
            assert band.aggregate.cds == 1.0

    def test_band_filters_both_sides(self):
        # A detection at 49.5m cannot match a GT at 50.5m across the boundary.
        dets = [[_box(49.5, score=0.9)]]
        gts = [[_box(50.5)]]
        report = evaluate_cohorts(dets, gts, [RangeBand(0, 50), RangeBand(50, 100)])
        near, far = report.bands[0], report.bands[1]
        assert near.excluded_classes == (0,)  # no GT in near band
        assert far.classes[0].ap == 0.0  # GT present, detection filtered out

    def test_tp_conservation_across_disjoint_bands(self):
        # Well-separated layout: per-band TP counts sum to the full-range count.
        dets = [[_box(10.0, score=0.9), _box(70.0, score=0.8), _box(120.0, score=0.7)]]
        gts = [[_box(10.4), _box(70.4), _box(120.4)]]
        bands = [RangeBand(0, 50), RangeBand(50, 100), RangeBand(100, 150)]
        report = evaluate_cohorts(dets, gts, bands)
        per_band = sum(b.classes[0].tp_count for b in report.bands[:3])
        assert per_band == report.bands[3].classes[0].tp_count == 3

    def test_empty_gt_class_excluded_with_flag(self):
        dets = [[_box(10.0, score=0.9, class_id=1)]]
        gts = [[_box(10.0, class_id=0)]]
        report = evaluate_cohorts(dets, gts, [RangeBand(0, 50)])
        band = report.bands[0]
        assert 1 in band.excluded_classes
        assert set(band.classes) == {0}

    def test_aggregate_is_mean_over_supported_classes(self):
        dets = [[_box(10.0, score=0.9, class_id=0), _box(30.0, score=0.8, class_id=1)]]
        gts = [[_box(10.0, class_id=0), _box(33.0, class_id=1)]]
        report = evaluate_cohorts(dets, gts, [RangeBand(0, 50)])
        band = report.bands[0]
        expect_ap = np.mean([band.classes[0].ap, band.classes[1].ap])
        assert band.aggregate.ap == pytest.approx(expect_ap)

    def test_detection_order_does_not_change_report(self, rng):
        from conftest import random_box

        dets = []
        n = 10
        scores = rng.permutation(np.linspace(0.05, 0.95, n))
        boxes = [random_box(rng, max_range=140.0) for _ in range(n)]
        boxes = [
            Box3D(b.center, b.dims, b.yaw, b.velocity, b.class_id, float(s))
            for b, s in zip(boxes, scores)
        ]
        gts = [[random_box(rng, max_range=140.0, score=1.0) for _ in range(6)]]
        bands = [RangeBand(0, 75), RangeBand(75, 150)]
        base = evaluate_cohorts([boxes], gts, bands)
        perm = [boxes[i] for i in rng.permutation(n)]
        other = evaluate_cohorts([perm], gts, bands)
        assert base.bands == other.bands

    def test_mismatched_frames_error(self):
        with pytest.raises(ValueError):
            evaluate_cohorts([[]], [[], []], [RangeBand(0, 50)])


class TestLatencyStats:
    def test_constant_frames(self):
        stats = latency_stats([StageTimings(post_proc=10.0)] * 4)
        assert stats.mean_ms == 10.0 and stats.std_ms == 0.0

    def test_population_std(self):
        stats = latency_stats([StageTimings(post_proc=5.0), StageTimings(post_proc=15.0)])
        assert stats.mean_ms == 10.0 and stats.std_ms == 5.0

    def test_per_stage_means(self):
        stats = latency_stats([StageTimings(1, 2, 3, 4, 5), StageTimings(3, 2, 3, 4, 5)])
        assert stats.stage_means["point_proc"] == 2.0
        assert stats.stage_means["backbone"] == 2.0

    def test_empty_error(self):
        with pytest.raises(ValueError):
            latency_stats([])
