"""Dataset assembly: split, on-disk layout, and refinement merging."""
from __future__ import annotations

import json
import random
import shutil
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

from seeker.annotations import CLASS_NAMES, ClassLabel, LabeledBox
from seeker.evaluate import iou

DESCRIPTOR_NAME = "dataset.txt"
SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2)
    seed: int = 0

    def __post_init__(self) -> None:
        if any(r < 0 for r in self.ratios):
            raise ValueError(f"ratios must be >= 0, got {self.ratios}")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError(f"ratios must sum to 1, got {self.ratios}")


@dataclass
class Split:
    train: list[str]
    val: list[str]
    test: list[str]

    def as_dict(self) -> dict[str, list[str]]:
        return {"train": self.train, "val": self.val, "test": self.test}


def split_dataset(patch_ids: Sequence[str], spec: SplitSpec = SplitSpec()) -> Split:
    """Seeded Fisher-Yates shuffle (Mersenne Twister via random.Random), then
    floor(r_train*N) / floor(r_val*N) / remainder.  Deterministic per seed
    and independent of input order."""
    if not patch_ids:
        raise ValueError("no patch ids to split")
    if len(set(patch_ids)) != len(patch_ids):
        dupes = sorted({p for p in patch_ids if list(patch_ids).count(p) > 1})
        raise ValueError(f"duplicate patch ids: {', '.join(dupes[:5])}")
    ids = sorted(patch_ids)
    random.Random(spec.seed).shuffle(ids)
    n = len(ids)
    # Fraction-of-string keeps floor(r*N) exact for decimal ratios like 0.7.
    n_train = int(Fraction(str(spec.ratios[0])) * n)
    n_val = int(Fraction(str(spec.ratios[1])) * n)
    return Split(ids[:n_train], ids[n_train:n_train + n_val], ids[n_train + n_val:])


def emit_dataset(split: Split, images: Mapping[str, Path], labels: Mapping[str, Path],
                 out_dir: Path, class_names: Sequence[str] = tuple(CLASS_NAMES)) -> Path:
    """Lay out images/{train,val,test} and labels/{...} plus the descriptor.

    ``images``/``labels`` map patch_id to source files.  Every patch needs a
    label file; id sidecars ride along when present.  Re-emitting over the
    same inputs is byte-identical.
    """
    out_dir = Path(out_dir)
    missing = [pid for ids in split.as_dict().values() for pid in ids if pid not in labels]
    if missing:
        raise ValueError(f"missing label files for: {', '.join(sorted(missing))}")
    missing_img = [pid for ids in split.as_dict().values() for pid in ids if pid not in images]
    if missing_img:
        raise ValueError(f"missing images for: {', '.join(sorted(missing_img))}")

    for split_name, ids in split.as_dict().items():
        img_dir = out_dir / "images" / split_name
        lbl_dir = out_dir / "labels" / split_name
        img_dir.mkdir(parents=True, exist_ok=True)
        lbl_dir.mkdir(parents=True, exist_ok=True)
        for pid in ids:
            src_img = Path(images[pid])
            src_lbl = Path(labels[pid])
            shutil.copyfile(src_img, img_dir / f"{pid}{src_img.suffix}")
            shutil.copyfile(src_lbl, lbl_dir / f"{pid}.txt")
            ids_file = src_lbl.with_suffix(".ids")
            if ids_file.exists():
                shutil.copyfile(ids_file, lbl_dir / f"{pid}.ids")

    descriptor = out_dir / DESCRIPTOR_NAME
    lines = [f"class {i} {name}" for i, name in enumerate(class_names)]
    lines += [f"{name} images/{name}" for name in SPLIT_NAMES]
    descriptor.write_text("".join(line + "\n" for line in lines))
    return descriptor


@dataclass
class ClassCorrections:
    n_auto: int = 0
    moved: int = 0
    reclassed: int = 0
    added: int = 0
    deleted: int = 0

    @property
    def n_corrected(self) -> int:
        return self.moved + self.reclassed + self.deleted

    @property
    def rate(self) -> float:
        return self.n_corrected / self.n_auto if self.n_auto else 0.0


@dataclass
class CorrectionStats:
    per_class: dict[ClassLabel, ClassCorrections] = field(
        default_factory=lambda: {c: ClassCorrections() for c in ClassLabel})

    def to_dict(self) -> dict:
        return {
            cls.label: {
                "n_auto": cc.n_auto,
                "n_corrected": cc.n_corrected,
                "rate": cc.rate,
                "moved": cc.moved,
                "reclassed": cc.reclassed,
                "added": cc.added,
                "deleted": cc.deleted,
            }
            for cls, cc in self.per_class.items()
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def merge_refinements(auto: Mapping[str, Sequence[LabeledBox]],
                      refined: Mapping[str, Sequence[LabeledBox]],
                      move_iou: float = 0.9,
                      ) -> tuple[dict[str, list[LabeledBox]], CorrectionStats]:
    """Overlay expert refinements on auto labels and tally corrections.

    Per patch the refined set replaces the auto set when present.  Per
    ann_id: deleted (auto only), added (refined only), reclassed (class
    changed), moved (same class, IoU below ``move_iou``); corrected =
    deleted + reclassed + moved, rated against auto counts per class.
    """
    _check_id_collisions(auto, "auto")
    _check_id_collisions(refined, "refined")
    unknown = set(refined) - set(auto)
    if unknown:
        raise ValueError(f"refined patches not in auto set: {', '.join(sorted(unknown))}")

    stats = CorrectionStats()
    final: dict[str, list[LabeledBox]] = {}
    for patch_id, auto_boxes in auto.items():
        for b in auto_boxes:
            stats.per_class[b.cls].n_auto += 1
        if patch_id not in refined:
            final[patch_id] = list(auto_boxes)
            continue
        ref_boxes = list(refined[patch_id])
        final[patch_id] = ref_boxes
        auto_by_id = {b.ann_id: b for b in auto_boxes}
        ref_by_id = {b.ann_id: b for b in ref_boxes}
        for ann_id, a in auto_by_id.items():
            r = ref_by_id.get(ann_id)
            if r is None:
                stats.per_class[a.cls].deleted += 1
            elif r.cls != a.cls:
                stats.per_class[a.cls].reclassed += 1
            elif iou(a.box, r.box) < move_iou:
                stats.per_class[a.cls].moved += 1
        for ann_id, r in ref_by_id.items():
            if ann_id not in auto_by_id:
                stats.per_class[r.cls].added += 1
    return final, stats


def _check_id_collisions(labels: Mapping[str, Sequence[LabeledBox]], name: str) -> None:
    seen: dict[str, str] = {}
    for patch_id, boxes in labels.items():
        for b in boxes:
            if b.ann_id in seen and seen[b.ann_id] != patch_id:
                raise ValueError(f"{name} labels: ann_id {b.ann_id!r} appears in patches "
                                 f"{seen[b.ann_id]!r} and {patch_id!r}")
            seen[b.ann_id] = patch_id
