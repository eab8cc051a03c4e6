"""Automated box labeling: segment per point, resolve overlaps, emit boxes.

Overlap resolution assigns every pixel claimed by several masks to the
object whose annotation point is nearest (pixel centers, Euclidean), which
splits merged masks along the perpendicular bisector between points.  The
fixed-buffer baseline labeler lives here too.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from seeker import kernels
from seeker.annotations import BufferConfig, LabeledBox, PointAnnotation, buffer_box
from seeker.raster import PatchRef
from seeker.segmenter import InstanceMask, SegmentBackend, SegmentRequest

log = logging.getLogger(__name__)


@dataclass
class ResolvedMaskSet:
    patch_id: str
    masks: list[InstanceMask]
    points: list[PointAnnotation]

    def validate(self) -> None:
        if len(self.masks) != len(self.points):
            raise ValueError("masks and points must align one-to-one")
        for m, p in zip(self.masks, self.points):
            if m.ann_id != p.ann_id:
                raise ValueError(f"mask/point id mismatch: {m.ann_id!r} vs {p.ann_id!r}")
        if self.masks:
            total = np.zeros_like(self.masks[0].bits, dtype=np.int32)
            for m in self.masks:
                total += m.bits
            if total.max() > 1:
                raise ValueError("resolved masks overlap")


def resolve_overlaps(masks: Sequence[InstanceMask],
                     points: Sequence[PointAnnotation],
                     patch_id: str = "") -> ResolvedMaskSet:
    """Make masks pairwise disjoint by nearest-annotation-point assignment.

    A pixel set in two or more masks survives only in the claiming mask
    whose point is nearest to the pixel center; exact ties go to the lowest
    input index.  Pixels claimed once are untouched.
    """
    if len(masks) != len(points):
        raise ValueError(f"{len(masks)} masks vs {len(points)} points")
    for m, p in zip(masks, points):
        if m.ann_id != p.ann_id:
            raise ValueError(f"mask/point id mismatch: {m.ann_id!r} vs {p.ann_id!r}")
    if not masks:
        return ResolvedMaskSet(patch_id, [], [])
    h, w = masks[0].bits.shape
    for m in masks:
        if m.bits.shape != (h, w):
            raise ValueError(f"mask {m.ann_id!r} dims {m.bits.shape} != {(h, w)}")
    if len(masks) == 1:
        only = masks[0]
        return ResolvedMaskSet(patch_id, [InstanceMask(only.ann_id, only.bits.copy(),
                                                       only.score)], list(points))

    stack = np.ascontiguousarray(
        np.stack([m.bits for m in masks]).astype(np.uint8))
    px = np.ascontiguousarray([p.x for p in points], dtype=np.float64)
    py = np.ascontiguousarray([p.y for p in points], dtype=np.float64)
    stack = kernels.assign_nearest(stack, px, py)
    resolved = [InstanceMask(m.ann_id, np.asarray(stack[i], dtype=bool), m.score)
                for i, m in enumerate(masks)]
    return ResolvedMaskSet(patch_id, resolved, list(points))


def mask_to_box(mask: InstanceMask, cls, ann_id: str | None = None) -> LabeledBox:
    """Tight half-open bounding box of the set pixels."""
    ys, xs = np.nonzero(mask.bits)
    if ys.size == 0:
        raise ValueError(f"object {mask.ann_id!r} lost during resolution (empty mask)")
    return LabeledBox(ann_id or mask.ann_id, cls,
                      (float(xs.min()), float(ys.min()),
                       float(xs.max() + 1), float(ys.max() + 1)))


@dataclass
class LabelResult:
    """Per-patch labeling output: boxes (sorted by ann_id) plus the resolved
    masks and the ids that fell back to their buffer box."""

    patch_id: str
    boxes: list[LabeledBox]
    resolved: ResolvedMaskSet
    fallback_ids: list[str] = field(default_factory=list)


def label_patch(patch: PatchRef, points: Sequence[PointAnnotation],
                backend: SegmentBackend, cfg: BufferConfig = BufferConfig(),
                *, image=None, gsd: float | None = None) -> LabelResult:
    """Run the full labeling procedure for one patch.

    Per point: buffer prompt box -> segment -> collect masks; resolve
    overlaps over the whole patch; tight box per object.  An object whose
    mask empties during resolution falls back to its buffer box with a
    warning.  Any backend error aborts the patch (no partial output).
    """
    gsd = patch.gsd if gsd is None else gsd
    if image is None:
        image = getattr(patch, "pixels", None)
    if image is None:
        raise ValueError(f"patch {patch.patch_id}: no pixels and no image path")

    ordered = sorted(points, key=lambda p: p.ann_id)
    prompts = {}
    masks = []
    for pt in ordered:
        prompt = buffer_box(pt, cfg, gsd, patch.size)
        prompts[pt.ann_id] = prompt
        req = SegmentRequest(patch.patch_id, pt.ann_id, image,
                             (pt.x, pt.y), prompt.box)
        masks.append(backend.segment(req))

    resolved = resolve_overlaps(masks, ordered, patch.patch_id)
    boxes = []
    fallbacks = []
    for mask, pt in zip(resolved.masks, resolved.points):
        try:
            boxes.append(mask_to_box(mask, pt.cls))
        except ValueError:
            log.warning("patch %s: %s emptied during resolution, using buffer box",
                        patch.patch_id, pt.ann_id)
            boxes.append(prompts[pt.ann_id])
            fallbacks.append(pt.ann_id)
    boxes.sort(key=lambda b: b.ann_id)
    return LabelResult(patch.patch_id, boxes, resolved, fallbacks)


def buffer_labels_baseline(points: Sequence[PointAnnotation],
                           cfg: BufferConfig, gsd: float,
                           patch_size: int) -> list[LabeledBox]:
    """Fixed-buffer labels only, no segmentation (the naive baseline)."""
    return sorted((buffer_box(pt, cfg, gsd, patch_size) for pt in points),
                  key=lambda b: b.ann_id)
