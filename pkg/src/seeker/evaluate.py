"""Detection scoring: IoU matching, per-class P/R/F1, threshold sweep,
confusion matrix with a background class, and multi-run averaging.

True positives use an IoU threshold of 0.25 (small targets make tighter
thresholds punish benign annotation jitter).  P/R/F1 use per-class greedy
matching; the confusion matrix matches class-agnostically so cross-class
confusions land in off-diagonal cells instead of the background row/column.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from seeker.annotations import CLASS_NAMES, ClassLabel

DEFAULT_IOU_THR = 0.25
DEFAULT_CONFUSION_CONF = 0.15
WHALE_OVERALL = "whale_overall"
BACKGROUND = "background"


@dataclass(frozen=True)
class Detection:
    patch_id: str
    cls: ClassLabel
    box: tuple[float, float, float, float]
    confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class GroundTruth:
    patch_id: str
    cls: ClassLabel
    box: tuple[float, float, float, float]
    ann_id: str = ""


def iou(a: Sequence[float], b: Sequence[float]) -> float:
    """Intersection over union of two half-open boxes; 0 when disjoint."""
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    if ax2 <= ax1 or ay2 <= ay1 or bx2 <= bx1 or by2 <= by1:
        raise ValueError(f"degenerate box: {a if ax2 <= ax1 or ay2 <= ay1 else b}")
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union


@dataclass
class MatchCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0


def _greedy_match_patch(dets: list[Detection], gts: list[GroundTruth],
                        iou_thr: float) -> tuple[int, list[tuple[Detection, GroundTruth]],
                                                 list[Detection], list[GroundTruth]]:
    """Greedy one-to-one matching within one patch.

    Detections are taken in confidence-descending order (ties: larger best
    IoU first, then input order); each takes the unmatched GT with the
    highest IoU >= iou_thr, ties to the lowest GT index.
    """
    ious = [[iou(d.box, g.box) for g in gts] for d in dets]
    best_possible = [max(row) if row else 0.0 for row in ious]
    order = sorted(range(len(dets)),
                   key=lambda i: (-dets[i].confidence, -best_possible[i]))
    taken = [False] * len(gts)
    pairs: list[tuple[Detection, GroundTruth]] = []
    unmatched_dets: list[Detection] = []
    for i in order:
        best_j = -1
        best_iou = 0.0
        for j in range(len(gts)):
            if taken[j]:
                continue
            v = ious[i][j]
            if v >= iou_thr and v > best_iou:
                best_iou = v
                best_j = j
        if best_j >= 0:
            taken[best_j] = True
            pairs.append((dets[i], gts[best_j]))
        else:
            unmatched_dets.append(dets[i])
    unmatched_gts = [g for j, g in enumerate(gts) if not taken[j]]
    return len(pairs), pairs, unmatched_dets, unmatched_gts


def _by_patch(items: Iterable) -> dict[str, list]:
    out: dict[str, list] = {}
    for it in items:
        out.setdefault(it.patch_id, []).append(it)
    return out


def match_class_aware(dets: Sequence[Detection], gts: Sequence[GroundTruth],
                      iou_thr: float = DEFAULT_IOU_THR,
                      conf_thr: float = 0.0) -> dict[ClassLabel, MatchCounts]:
    """Per-class greedy matching across patches; returns tp/fp/fn per class."""
    kept = [d for d in dets if d.confidence >= conf_thr]
    counts = {c: MatchCounts() for c in ClassLabel}
    det_patches = _by_patch(kept)
    gt_patches = _by_patch(gts)
    for patch_id in sorted(set(det_patches) | set(gt_patches)):
        pd = det_patches.get(patch_id, [])
        pg = gt_patches.get(patch_id, [])
        for cls in ClassLabel:
            cd = [d for d in pd if d.cls == cls]
            cg = [g for g in pg if g.cls == cls]
            tp, _, fps, fns = _greedy_match_patch(cd, cg, iou_thr)
            counts[cls].tp += tp
            counts[cls].fp += len(fps)
            counts[cls].fn += len(fns)
    return counts


@dataclass
class ClassScore:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "ClassScore":
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        return cls(tp, fp, fn, p, r, f1)


@dataclass
class ClassMetrics:
    classes: dict[str, ClassScore]
    whale_overall: ClassScore
    mf1: float

    def to_dict(self) -> dict:
        def enc(s: ClassScore) -> dict:
            return {"tp": s.tp, "fp": s.fp, "fn": s.fn, "precision": s.precision,
                    "recall": s.recall, "f1": s.f1}

        out = {name: enc(score) for name, score in self.classes.items()}
        out[WHALE_OVERALL] = enc(self.whale_overall)
        out["mf1"] = self.mf1
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _merge_whales(dets: Sequence[Detection],
                  gts: Sequence[GroundTruth]) -> tuple[list[Detection], list[GroundTruth]]:
    whales = (ClassLabel.CERTAIN_WHALE, ClassLabel.UNCERTAIN_WHALE)
    md = [replace(d, cls=ClassLabel.CERTAIN_WHALE) for d in dets if d.cls in whales]
    mg = [replace(g, cls=ClassLabel.CERTAIN_WHALE) for g in gts if g.cls in whales]
    return md, mg


def score(dets: Sequence[Detection], gts: Sequence[GroundTruth],
          iou_thr: float = DEFAULT_IOU_THR, conf_thr: float = 0.0) -> ClassMetrics:
    """Per-class and whale-overall P/R/F1 plus the mean F1 over the three
    annotation classes.  Whale overall relabels certain+uncertain to one
    class in both detections and ground truth before matching."""
    counts = match_class_aware(dets, gts, iou_thr, conf_thr)
    classes = {c.label: ClassScore.from_counts(counts[c].tp, counts[c].fp, counts[c].fn)
               for c in ClassLabel}
    md, mg = _merge_whales(dets, gts)
    merged = match_class_aware(md, mg, iou_thr, conf_thr)[ClassLabel.CERTAIN_WHALE]
    overall = ClassScore.from_counts(merged.tp, merged.fp, merged.fn)
    mf1 = sum(s.f1 for s in classes.values()) / len(classes)
    return ClassMetrics(classes, overall, mf1)


def sweep_threshold(dets: Sequence[Detection], gts: Sequence[GroundTruth],
                    iou_thr: float = DEFAULT_IOU_THR,
                    grid: Sequence[float] | None = None,
                    target: ClassLabel = ClassLabel.CERTAIN_WHALE) -> float:
    """Confidence threshold maximizing the target class F1 on a validation
    set; ties resolve to the lowest grid threshold."""
    if not any(g.cls == target for g in gts):
        raise ValueError(f"nothing to optimize: no {target.label} ground truth")
    if grid is None:
        grid = [i / 100 for i in range(101)]
    best_thr = grid[0]
    best_f1 = -1.0
    for thr in grid:
        counts = match_class_aware(dets, gts, iou_thr, conf_thr=thr)[target]
        f1 = ClassScore.from_counts(counts.tp, counts.fp, counts.fn).f1
        if f1 > best_f1:
            best_f1 = f1
            best_thr = thr
    return best_thr


@dataclass
class ConfusionMatrix:
    """4x4 counts over the three classes plus background; rows are ground
    truth, columns are predictions.  (background, background) stays 0."""

    counts: np.ndarray = field(default_factory=lambda: np.zeros((4, 4), dtype=np.int64))
    labels: tuple[str, ...] = tuple(CLASS_NAMES + [BACKGROUND])

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "counts": self.counts.tolist()}

    def render(self) -> str:
        width = max(len(l) for l in self.labels) + 2
        head = " " * width + "".join(l.rjust(width) for l in self.labels)
        lines = [head]
        for i, label in enumerate(self.labels):
            row = label.rjust(width) + "".join(
                str(int(v)).rjust(width) for v in self.counts[i])
            lines.append(row)
        return "\n".join(lines) + "\n"


def confusion_matrix(dets: Sequence[Detection], gts: Sequence[GroundTruth],
                     conf_thr: float = DEFAULT_CONFUSION_CONF,
                     iou_thr: float = DEFAULT_IOU_THR) -> ConfusionMatrix:
    """Class-agnostic greedy matching; matched pairs increment
    (gt_class, det_class), misses and false alarms hit the background
    column/row respectively."""
    cm = ConfusionMatrix()
    bg = 3
    kept = [d for d in dets if d.confidence >= conf_thr]
    det_patches = _by_patch(kept)
    gt_patches = _by_patch(gts)
    for patch_id in sorted(set(det_patches) | set(gt_patches)):
        pd = det_patches.get(patch_id, [])
        pg = gt_patches.get(patch_id, [])
        _, pairs, fp_dets, fn_gts = _greedy_match_patch(pd, pg, iou_thr)
        for d, g in pairs:
            cm.counts[int(g.cls), int(d.cls)] += 1
        for g in fn_gts:
            cm.counts[int(g.cls), bg] += 1
        for d in fp_dets:
            cm.counts[bg, int(d.cls)] += 1
    return cm


def aggregate_runs(runs: Sequence[ClassMetrics]) -> ClassMetrics:
    """Field-wise mean of every rate across runs; counts are summed so the
    report still shows totals."""
    if not runs:
        raise ValueError("no runs to aggregate")
    n = len(runs)

    def agg(scores: list[ClassScore]) -> ClassScore:
        return ClassScore(
            tp=sum(s.tp for s in scores),
            fp=sum(s.fp for s in scores),
            fn=sum(s.fn for s in scores),
            precision=sum(s.precision for s in scores) / n,
            recall=sum(s.recall for s in scores) / n,
            f1=sum(s.f1 for s in scores) / n,
        )

    classes = {name: agg([r.classes[name] for r in runs]) for name in runs[0].classes}
    overall = agg([r.whale_overall for r in runs])
    mf1 = sum(r.mf1 for r in runs) / n
    return ClassMetrics(classes, overall, mf1)


# ---------------------------------------------------------------------------
# Report rendering

_GROUPS = [("Certain whale", ClassLabel.CERTAIN_WHALE.label),
           ("Uncertain whale", ClassLabel.UNCERTAIN_WHALE.label),
           ("Whale overall", WHALE_OVERALL),
           ("Harp seal", ClassLabel.HARP_SEAL.label)]
_NAME_W = 14
_CELL_W = 7


def emit_report(rows: Sequence[tuple[str, ClassMetrics]]) -> str:
    """Fixed-width metric table, percentages to one decimal.

    One row per annotation approach: mF1 then P/R/F1 for certain whale,
    uncertain whale, whale overall, and harp seal.
    """
    head1 = "Annotation".ljust(_NAME_W) + "mF1".rjust(_CELL_W)
    head2 = " " * (_NAME_W + _CELL_W)
    for title, _ in _GROUPS:
        head1 += title.center(3 * _CELL_W)
        head2 += "P".rjust(_CELL_W) + "R".rjust(_CELL_W) + "F1".rjust(_CELL_W)
    lines = [head1.rstrip(), head2.rstrip()]
    for name, m in rows:
        cells = [f"{m.mf1 * 100:>{_CELL_W}.1f}"]
        for _, key in _GROUPS:
            s = m.whale_overall if key == WHALE_OVERALL else m.classes[key]
            cells += [f"{v * 100:>{_CELL_W}.1f}" for v in (s.precision, s.recall, s.f1)]
        lines.append(name.ljust(_NAME_W) + "".join(cells))
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict[str, ClassMetrics]:
    """Parse a table produced by :func:`emit_report` (rates only; counts are
    not representable in the table and come back as zeros)."""
    out: dict[str, ClassMetrics] = {}
    lines = [l for l in text.splitlines() if l.strip()]
    for line in lines[2:]:
        tokens = line.split()
        if len(tokens) < 14:
            raise ValueError(f"report row too short: {line!r}")
        values = [float(t) / 100 for t in tokens[-13:]]
        name = " ".join(tokens[:-13])
        mf1 = values[0]
        scores = {}
        for gi, (_, key) in enumerate(_GROUPS):
            p, r, f1 = values[1 + 3 * gi: 4 + 3 * gi]
            scores[key] = ClassScore(precision=p, recall=r, f1=f1)
        out[name] = ClassMetrics(
            {k: v for k, v in scores.items() if k != WHALE_OVERALL},
            scores[WHALE_OVERALL], mf1)
    return out


# ---------------------------------------------------------------------------
# Prediction file I/O

def parse_predictions(text: str, patch_size: int, patch_id: str) -> list[Detection]:
    """Parse ``<class> <cx> <cy> <w> <h> <conf>`` prediction lines
    (normalized coordinates, same conventions as label files)."""
    dets = []
    for ln, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 6:
            raise ValueError(f"{patch_id} line {ln}: expected 6 fields, got {len(fields)}")
        try:
            cid = int(fields[0])
            cx, cy, w, h, conf = (float(v) for v in fields[1:])
        except ValueError:
            raise ValueError(f"{patch_id} line {ln}: malformed value") from None
        try:
            cls = ClassLabel(cid)
        except ValueError:
            raise ValueError(f"{patch_id} line {ln}: unknown class id {cid}") from None
        for name, v in (("cx", cx), ("cy", cy), ("w", w), ("h", h), ("conf", conf)):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{patch_id} line {ln}: {name}={v} outside [0, 1]")
        s = float(patch_size)
        dets.append(Detection(patch_id, cls,
                              ((cx - w / 2) * s, (cy - h / 2) * s,
                               (cx + w / 2) * s, (cy + h / 2) * s), conf))
    return dets


def load_predictions(pred_dir: Path, patch_size: int) -> list[Detection]:
    dets: list[Detection] = []
    for path in sorted(Path(pred_dir).glob("*.txt")):
        dets.extend(parse_predictions(path.read_text(), patch_size, path.stem))
    return dets


def load_ground_truth(gt_dir: Path, patch_size: int) -> list[GroundTruth]:
    from seeker.annotations import load_label_file

    gts: list[GroundTruth] = []
    for path in sorted(Path(gt_dir).glob("*.txt")):
        for b in load_label_file(path, patch_size):
            gts.append(GroundTruth(path.stem, b.cls, b.box, b.ann_id))
    return gts


def labels_as_detections(gt_dir: Path, patch_size: int,
                         confidence: float = 1.0) -> list[Detection]:
    """Treat label files as confidence-1.0 detections (scores an automatic
    labeler against reference labels)."""
    return [Detection(g.patch_id, g.cls, g.box, confidence)
            for g in load_ground_truth(gt_dir, patch_size)]
