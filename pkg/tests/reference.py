"""Independent brute-force references used as test oracles.

Everything here is written with explicit Python loops, separately from the
package implementation, so the two sides can disagree when one is wrong.
"""

from __future__ import annotations

import math
from typing import List, Sequence, Tuple


def ref_greedy_match(
    dets: Sequence, gts: Sequence, thresh: float
) -> Tuple[List[bool], List[Tuple[int, int]]]:
    """Greedy score-descending center-distance matching, plain loops.

    dets/gts expose .score, .center, .class_id like Box3D.
    """
    order = list(range(len(dets)))
    order.sort(key=lambda i: (-dets[i].score, i))
    taken = set()
    tp = [False] * len(dets)
    pairs = []
    for i in order:
        det = dets[i]
        candidates = []
        for g in range(len(gts)):
            if g in taken:
                continue
            gt = gts[g]
            if gt.class_id != det.class_id:
                continue
            d = math.sqrt(
                (det.center[0] - gt.center[0]) ** 2 + (det.center[1] - gt.center[1]) ** 2
            )
            if d <= thresh:
                candidates.append((d, g))
        if candidates:
            candidates.sort()
            g = candidates[0][1]
            taken.add(g)
            tp[i] = True
            pairs.append((i, g))
    return tp, pairs


def ref_average_precision(
    tp_flags: Sequence[bool], scores: Sequence[float], gt_count: int, recall_points: int = 101
) -> float:
    """N-point interpolated AP via exhaustive prefix scanning."""
    if gt_count == 0:
        raise ValueError("AP undefined for gt_count == 0")
    n = len(tp_flags)
    if n == 0:
        return 0.0
    order = list(range(n))
    order.sort(key=lambda i: (-scores[i], i))
    precisions = []
    recalls = []
    tp_so_far = 0
    for rank, i in enumerate(order, start=1):
        if tp_flags[i]:
            tp_so_far += 1
        precisions.append(tp_so_far / rank)
        recalls.append(tp_so_far / gt_count)
    total = 0.0
    for step in range(recall_points):
        r = step / (recall_points - 1)
        best = 0.0
        for p, rec in zip(precisions, recalls):
            if rec >= r - 1e-12 and p > best:
                best = p
        total += best
    return total / recall_points


def ref_cds(ap: float, ate: float, ase: float, aoe: float) -> float:
    """Composite detection score with the standard normalizers."""
    c1 = 1.0 - min(ate, 2.0) / 2.0
    c2 = 1.0 - min(ase, 1.0) / 1.0
    c3 = 1.0 - min(aoe, math.pi) / math.pi
    return ap * (c1 + c2 + c3) / 3.0


def ref_greedy_nms(dets: Sequence, dist_thresh: float) -> List[int]:
    """O(n^2) greedy suppression; returns kept indices in score order."""
    order = list(range(len(dets)))
    order.sort(key=lambda i: (-dets[i].score, i))
    kept: List[int] = []
    for i in order:
        suppressed = False
        for j in kept:
            if dets[j].class_id != dets[i].class_id:
                continue
            dx = dets[i].center[0] - dets[j].center[0]
            dy = dets[i].center[1] - dets[j].center[1]
            if math.sqrt(dx * dx + dy * dy) < dist_thresh:
                suppressed = True
                break
        if not suppressed:
            kept.append(i)
    return kept
