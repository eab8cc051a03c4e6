"""Point annotations, buffer prompt boxes, and YOLO label file I/O.

Label files carry no identity, so every label file gets a parallel ``.ids``
sidecar (one ann_id per line) that refinement tracking relies on; external
trainers ignore it.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Iterable, Sequence

from seeker.raster import PatchRef, px_from_meters


class ClassLabel(IntEnum):
    CERTAIN_WHALE = 0
    UNCERTAIN_WHALE = 1
    HARP_SEAL = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_name(cls, name: str) -> "ClassLabel":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown class {name!r}; expected one of "
                             f"{', '.join(c.label for c in cls)}") from None


CLASS_NAMES = [c.label for c in ClassLabel]

POINT_CSV_HEADER = ["ann_id", "scene_id", "x", "y", "class"]


@dataclass(frozen=True)
class PointAnnotation:
    ann_id: str
    scene_id: str
    x: float
    y: float
    cls: ClassLabel


@dataclass(frozen=True)
class BufferConfig:
    """Per-class prompt-box buffer in meters.

    By default the value is a half-extent (4 m buffer -> 8 m box side);
    ``full_side=True`` switches to the reading where the value is the whole
    box side.
    """

    certain_whale_m: float = 4.0
    uncertain_whale_m: float = 4.0
    harp_seal_m: float = 2.0
    full_side: bool = False

    def __post_init__(self) -> None:
        for field in ("certain_whale_m", "uncertain_whale_m", "harp_seal_m"):
            if getattr(self, field) <= 0:
                raise ValueError(f"buffer {field} must be > 0")

    def meters_for(self, cls: ClassLabel) -> float:
        return {
            ClassLabel.CERTAIN_WHALE: self.certain_whale_m,
            ClassLabel.UNCERTAIN_WHALE: self.uncertain_whale_m,
            ClassLabel.HARP_SEAL: self.harp_seal_m,
        }[cls]

    def half_extent_m(self, cls: ClassLabel) -> float:
        m = self.meters_for(cls)
        return m / 2 if self.full_side else m


@dataclass(frozen=True)
class LabeledBox:
    """Axis-aligned half-open box in patch pixel coordinates."""

    ann_id: str
    cls: ClassLabel
    box: tuple[float, float, float, float]  # x1, y1, x2, y2 with x1 < x2, y1 < y2

    def __post_init__(self) -> None:
        x1, y1, x2, y2 = self.box
        if not (x1 < x2 and y1 < y2):
            raise ValueError(f"box {self.ann_id!r}: degenerate corners {self.box}")

    @property
    def area(self) -> float:
        x1, y1, x2, y2 = self.box
        return (x2 - x1) * (y2 - y1)


def parse_points(source) -> list[PointAnnotation]:
    """Read the interchange CSV (``ann_id,scene_id,x,y,class``), order kept.

    ``source`` is a path or an open text file.  Rows with an unknown class,
    a duplicate (scene_id, ann_id) pair, or a negative/non-numeric
    coordinate are rejected with the offending row number.
    """
    if hasattr(source, "read"):
        fh = source
        close = False
    else:
        fh = open(source, newline="")
        close = True
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != POINT_CSV_HEADER:
            raise ValueError(f"point CSV header must be {','.join(POINT_CSV_HEADER)}, "
                             f"got {header}")
        points: list[PointAnnotation] = []
        seen: set[tuple[str, str]] = set()
        for ln, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 5:
                raise ValueError(f"row {ln}: expected 5 fields, got {len(row)}")
            ann_id, scene_id, xs, ys, cname = [v.strip() for v in row]
            try:
                x, y = float(xs), float(ys)
            except ValueError:
                raise ValueError(f"row {ln}: non-numeric coordinate ({xs!r}, {ys!r})") from None
            if x < 0 or y < 0:
                raise ValueError(f"row {ln}: coordinate out of range ({x}, {y})")
            try:
                cls = ClassLabel.from_name(cname)
            except ValueError as exc:
                raise ValueError(f"row {ln}: {exc}") from None
            key = (scene_id, ann_id)
            if key in seen:
                raise ValueError(f"row {ln}: duplicate ann_id {ann_id!r} in scene {scene_id!r}")
            seen.add(key)
            points.append(PointAnnotation(ann_id, scene_id, x, y, cls))
        return points
    finally:
        if close:
            fh.close()


def write_points(points: Sequence[PointAnnotation], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(POINT_CSV_HEADER)
        for p in points:
            writer.writerow([p.ann_id, p.scene_id, repr(p.x), repr(p.y), p.cls.label])


def localize_points(points: Iterable[PointAnnotation],
                    patches: Sequence[PatchRef]) -> dict[str, list[PointAnnotation]]:
    """Assign each point to its owning patch and translate to patch coords.

    Ownership is the first containing patch in row-major (manifest) order,
    so a point in an edge-tile overlap region lands in exactly one patch.
    """
    out: dict[str, list[PointAnnotation]] = {}
    for pt in points:
        owner = None
        for p in patches:
            if pt.scene_id != p.scene_id:
                continue
            if p.x <= pt.x < p.x + p.size and p.y <= pt.y < p.y + p.size:
                owner = p
                break
        if owner is None:
            raise ValueError(f"point {pt.ann_id!r} at ({pt.x}, {pt.y}) in scene "
                             f"{pt.scene_id!r} is outside every patch")
        local = replace(pt, x=pt.x - owner.x, y=pt.y - owner.y)
        out.setdefault(owner.patch_id, []).append(local)
    return out


def buffer_box(point: PointAnnotation, cfg: BufferConfig, gsd: float,
               patch_size: int) -> LabeledBox:
    """Fixed buffer box around a point (patch coords), clipped to the patch."""
    h = px_from_meters(cfg.half_extent_m(point.cls), gsd)
    x1 = max(0.0, point.x - h)
    y1 = max(0.0, point.y - h)
    x2 = min(float(patch_size), point.x + h)
    y2 = min(float(patch_size), point.y + h)
    if x2 - x1 <= 0 or y2 - y1 <= 0 or (x2 - x1) * (y2 - y1) < 1.0:
        raise ValueError(f"annotation {point.ann_id!r} outside usable area "
                         f"(clipped box degenerate)")
    return LabeledBox(point.ann_id, point.cls, (x1, y1, x2, y2))


def write_yolo_labels(boxes: Sequence[LabeledBox], patch_size: int) -> tuple[str, str]:
    """Serialize boxes to YOLO label text plus the id sidecar.

    One ``<class> <cx> <cy> <w> <h>`` line per box, normalized to the patch
    edge, six decimals, sorted by ann_id; the sidecar holds the ann_id for
    each line, in the same order.
    """
    lines = []
    ids = []
    for b in sorted(boxes, key=lambda b: b.ann_id):
        x1, y1, x2, y2 = b.box
        s = float(patch_size)
        cx, cy = (x1 + x2) / 2 / s, (y1 + y2) / 2 / s
        w, h = (x2 - x1) / s, (y2 - y1) / s
        lines.append(f"{int(b.cls)} {cx:.6f} {cy:.6f} {w:.6f} {h:.6f}")
        ids.append(b.ann_id)
    label_text = "".join(line + "\n" for line in lines)
    ids_text = "".join(i + "\n" for i in ids)
    return label_text, ids_text


def parse_yolo_labels(text: str, patch_size: int,
                      ids_text: str | None = None) -> list[LabeledBox]:
    """Inverse of :func:`write_yolo_labels` up to 6-decimal quantization.

    Without a sidecar, ann_ids are synthesized as the line index.
    """
    ids = ids_text.splitlines() if ids_text is not None else None
    boxes = []
    data_lines = [(ln, line) for ln, line in enumerate(text.splitlines(), 1) if line.strip()]
    if ids is not None and len(ids) != len(data_lines):
        raise ValueError(f"id sidecar has {len(ids)} lines for {len(data_lines)} labels")
    for idx, (ln, line) in enumerate(data_lines):
        fields = line.split()
        if len(fields) != 5:
            raise ValueError(f"line {ln}: expected 5 fields, got {len(fields)}")
        try:
            cid = int(fields[0])
            cx, cy, w, h = (float(v) for v in fields[1:])
        except ValueError:
            raise ValueError(f"line {ln}: malformed value in {line!r}") from None
        try:
            cls = ClassLabel(cid)
        except ValueError:
            raise ValueError(f"line {ln}: unknown class id {cid}") from None
        for name, v in (("cx", cx), ("cy", cy), ("w", w), ("h", h)):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"line {ln}: {name}={v} outside [0, 1]")
        s = float(patch_size)
        x1, x2 = (cx - w / 2) * s, (cx + w / 2) * s
        y1, y2 = (cy - h / 2) * s, (cy + h / 2) * s
        ann_id = ids[idx] if ids is not None else str(idx)
        boxes.append(LabeledBox(ann_id, cls, (x1, y1, x2, y2)))
    return boxes


def load_label_file(label_path, patch_size: int) -> list[LabeledBox]:
    """Read a label .txt plus its .ids sidecar when present."""
    from pathlib import Path

    label_path = Path(label_path)
    ids_path = label_path.with_suffix(".ids")
    ids_text = ids_path.read_text() if ids_path.exists() else None
    return parse_yolo_labels(label_path.read_text(), patch_size, ids_text)
