"""Independent reference implementations used only to check the package.

Everything here is written the dumbest correct way (explicit loops, no
shared code with src/) so tests compare two separately derived answers.
"""
from __future__ import annotations

import math


def resolve_masks_reference(mask_lists, points):
    """Per-pixel nearest-point assignment over a list of 2-D 0/1 lists.

    points: [(x, y), ...] aligned with mask_lists.  Returns new masks where
    every pixel claimed by >= 2 inputs survives only in the claimant whose
    point is nearest to the pixel center; ties to the lowest index.
    """
    n = len(mask_lists)
    if n == 0:
        return []
    h = len(mask_lists[0])
    w = len(mask_lists[0][0])
    out = [[[0] * w for _ in range(h)] for _ in range(n)]
    for y in range(h):
        for x in range(w):
            claimants = [i for i in range(n) if mask_lists[i][y][x]]
            if not claimants:
                continue
            if len(claimants) == 1:
                out[claimants[0]][y][x] = 1
                continue
            cx, cy = x + 0.5, y + 0.5
            winner = claimants[0]
            dx = cx - points[winner][0]
            dy = cy - points[winner][1]
            best = dx * dx + dy * dy
            for i in claimants[1:]:
                dx = cx - points[i][0]
                dy = cy - points[i][1]
                d2 = dx * dx + dy * dy
                if d2 < best:
                    best = d2
                    winner = i
            out[winner][y][x] = 1
    return out


def tiling_offsets_reference(extent, patch_size):
    """All distinct clamp-anchored offsets covering [0, extent)."""
    offsets = []
    pos = 0
    while True:
        if pos + patch_size >= extent:
            offsets.append(extent - patch_size)
            break
        offsets.append(pos)
        pos += patch_size
    return offsets


def percentile_reference(samples, pct):
    """Linear-interpolation percentile over a raw sample list."""
    ordered = sorted(samples)
    if len(ordered) == 1:
        return float(ordered[0])
    rank = (len(ordered) - 1) * pct / 100.0
    lo = math.floor(rank)
    hi = math.ceil(rank)
    frac = rank - lo
    return ordered[lo] * (1 - frac) + ordered[hi] * frac


def stretch_reference(samples, p_low, p_high):
    """Percentile linear stretch of a sample list to 0..255 ints."""
    lo = percentile_reference(samples, p_low)
    hi = percentile_reference(samples, p_high)
    if hi == lo:
        return [0] * len(samples)
    out = []
    for v in samples:
        scaled = 255.0 * (v - lo) / (hi - lo)
        out.append(min(255, max(0, math.floor(scaled + 0.5))))
    return out


def box_iou_reference(a, b):
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter) if inter else 0.0


def greedy_match_reference(dets, gts, iou_thr):
    """Single-patch greedy matcher following the documented ordering rules.

    dets: [(conf, box)], gts: [box].  Detections ordered by confidence
    descending, ties by best achievable IoU then input order; each takes
    the unmatched GT with max IoU >= thr (tie: lowest GT index).
    Returns (tp, matched det indices -> gt indices).
    """
    best_iou = []
    for conf, box in dets:
        vals = [box_iou_reference(box, g) for g in gts]
        best_iou.append(max(vals) if vals else 0.0)
    order = sorted(range(len(dets)),
                   key=lambda i: (-dets[i][0], -best_iou[i], i))
    taken = set()
    assignment = {}
    for i in order:
        choice = -1
        choice_iou = 0.0
        for j, g in enumerate(gts):
            if j in taken:
                continue
            v = box_iou_reference(dets[i][1], g)
            if v >= iou_thr and v > choice_iou:
                choice_iou = v
                choice = j
        if choice >= 0:
            taken.add(choice)
            assignment[i] = choice
    return len(assignment), assignment


def f1_reference(tp, fp, fn):
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return 2 * p * r / (p + r) if p + r else 0.0
