"""Overlap resolution, tight boxes, and the per-patch labeling procedure."""
import numpy as np
import pytest

from oracles import box_iou_reference, resolve_masks_reference
from seeker.annotations import BufferConfig, ClassLabel, PointAnnotation
from seeker.boxgen import (buffer_labels_baseline, label_patch, mask_to_box,
                           resolve_overlaps)
from seeker.raster import PatchRef
from seeker.segmenter import (BackendError, FixtureBackend, InstanceMask,
                              SyntheticBackend, generate_synthetic_scene)


def pt(ann_id, x, y, cls=ClassLabel.CERTAIN_WHALE):
    return PointAnnotation(ann_id, "s", x, y, cls)


def mask(ann_id, bits, score=1.0):
    return InstanceMask(ann_id, np.asarray(bits, dtype=bool), score)


class TestResolveOverlaps:
    def test_single_mask_unchanged(self):
        bits = np.zeros((4, 4), dtype=bool)
        bits[1:3, 1:3] = True
        out = resolve_overlaps([mask("a", bits)], [pt("a", 1.5, 1.5)])
        assert (out.masks[0].bits == bits).all()

    def test_bisector_split(self):
        bits = np.ones((1, 4), dtype=bool)
        out = resolve_overlaps([mask("a", bits), mask("b", bits)],
                               [pt("a", 0.5, 0.5), pt("b", 3.5, 0.5)])
        assert out.masks[0].bits.tolist() == [[True, True, False, False]]
        assert out.masks[1].bits.tolist() == [[False, False, True, True]]

    def test_200_random_scenes_match_bruteforce(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            h = int(rng.integers(4, 33))
            w = int(rng.integers(4, 33))
            n = int(rng.integers(1, 7))
            stack = (rng.random((n, h, w)) < 0.4)
            pts = [pt(f"m{i}", float(rng.uniform(0, w)), float(rng.uniform(0, h)))
                   for i in range(n)]
            out = resolve_overlaps([mask(p.ann_id, stack[i]) for i, p in enumerate(pts)],
                                   pts)
            expected = resolve_masks_reference([m.astype(int).tolist() for m in stack],
                                               [(p.x, p.y) for p in pts])
            for i in range(n):
                assert (out.masks[i].bits == np.asarray(expected[i], dtype=bool)).all()

    def test_disjoint_after_resolution(self):
        rng = np.random.default_rng(43)
        stack = rng.random((5, 20, 20)) < 0.5
        pts = [pt(f"m{i}", float(rng.uniform(0, 20)), float(rng.uniform(0, 20)))
               for i in range(5)]
        out = resolve_overlaps([mask(p.ann_id, stack[i]) for i, p in enumerate(pts)], pts)
        total = sum(m.bits.astype(int) for m in out.masks)
        assert total.max() <= 1
        out.validate()

    def test_never_sets_new_pixels_never_unsets_single_claims(self):
        rng = np.random.default_rng(44)
        stack = rng.random((4, 16, 16)) < 0.4
        pts = [pt(f"m{i}", float(rng.uniform(0, 16)), float(rng.uniform(0, 16)))
               for i in range(4)]
        out = resolve_overlaps([mask(p.ann_id, stack[i]) for i, p in enumerate(pts)], pts)
        union_before = np.logical_or.reduce(stack)
        union_after = np.logical_or.reduce([m.bits for m in out.masks])
        counts = stack.sum(axis=0)
        assert (union_after == union_before).all()  # no pixel lost or invented
        for i in range(4):
            solo = stack[i] & (counts == 1)
            assert (out.masks[i].bits & solo).sum() == solo.sum()

    def test_idempotent(self):
        rng = np.random.default_rng(45)
        stack = rng.random((3, 12, 12)) < 0.5
        pts = [pt(f"m{i}", float(rng.uniform(0, 12)), float(rng.uniform(0, 12)))
               for i in range(3)]
        once = resolve_overlaps([mask(p.ann_id, stack[i]) for i, p in enumerate(pts)], pts)
        twice = resolve_overlaps(once.masks, once.points)
        for a, b in zip(once.masks, twice.masks):
            assert (a.bits == b.bits).all()

    def test_dim_mismatch(self):
        with pytest.raises(ValueError, match="dims"):
            resolve_overlaps([mask("a", np.zeros((4, 4))), mask("b", np.zeros((5, 4)))],
                             [pt("a", 1, 1), pt("b", 2, 2)])

    def test_id_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            resolve_overlaps([mask("a", np.zeros((4, 4)))], [pt("zz", 1, 1)])


class TestMaskToBox:
    def test_single_pixel(self):
        bits = np.zeros((10, 10), dtype=bool)
        bits[7, 5] = True
        box = mask_to_box(mask("a", bits), ClassLabel.HARP_SEAL)
        assert box.box == (5.0, 7.0, 6.0, 8.0)

    def test_full_patch(self):
        box = mask_to_box(mask("a", np.ones((320, 320))), ClassLabel.CERTAIN_WHALE)
        assert box.box == (0.0, 0.0, 320.0, 320.0)

    def test_ellipse_tight_bounds(self):
        scene = generate_synthetic_scene(31, 1, 64)
        box = mask_to_box(mask("a", scene.masks[0]), scene.points[0].cls)
        assert box.box == scene.boxes[0].box

    def test_contains_all_pixels_and_no_tighter(self):
        rng = np.random.default_rng(46)
        bits = rng.random((30, 30)) < 0.1
        if not bits.any():
            bits[4, 9] = True
        box = mask_to_box(mask("a", bits), ClassLabel.HARP_SEAL)
        x1, y1, x2, y2 = box.box
        ys, xs = np.nonzero(bits)
        assert (xs >= x1).all() and (xs < x2).all()
        assert (ys >= y1).all() and (ys < y2).all()
        assert xs.min() == x1 and xs.max() == x2 - 1
        assert ys.min() == y1 and ys.max() == y2 - 1

    def test_empty_mask_errors(self):
        with pytest.raises(ValueError, match="lost during resolution"):
            mask_to_box(mask("a", np.zeros((4, 4))), ClassLabel.HARP_SEAL)


def ref(size=64, gsd=0.3, patch_id="s_0_0"):
    return PatchRef(patch_id, "s", 0, 0, size, gsd)


class TestLabelPatch:
    def test_single_ellipse_high_iou(self):
        scene = generate_synthetic_scene(51, 1, 64)
        result = label_patch(ref(), scene.points, SyntheticBackend(),
                             image=scene.image)
        assert len(result.boxes) == 1
        assert box_iou_reference(result.boxes[0].box, scene.boxes[0].box) >= 0.9

    def test_touching_pair_disjoint_and_reasonable(self):
        scene = generate_synthetic_scene(52, 2, 96, touch_probability=1.0)
        result = label_patch(ref(96), scene.points, SyntheticBackend(),
                             image=scene.image)
        assert len(result.boxes) == 2
        total = sum(m.bits.astype(int) for m in result.resolved.masks)
        assert total.max() <= 1
        by_id = {b.ann_id: b for b in result.boxes}
        for gt in scene.boxes:
            assert box_iou_reference(by_id[gt.ann_id].box, gt.box) >= 0.6

    def test_no_points(self):
        result = label_patch(ref(), [], SyntheticBackend(),
                             image=np.zeros((64, 64), dtype=np.uint8))
        assert result.boxes == []

    def test_output_sorted_by_ann_id(self):
        scene = generate_synthetic_scene(53, 5, 128)
        shuffled = list(reversed(scene.points))
        result = label_patch(ref(128), shuffled, SyntheticBackend(),
                             image=scene.image)
        assert [b.ann_id for b in result.boxes] == sorted(p.ann_id for p in scene.points)

    def test_point_order_invariance(self):
        scene = generate_synthetic_scene(54, 6, 128, touch_probability=0.6)
        a = label_patch(ref(128), scene.points, SyntheticBackend(), image=scene.image)
        b = label_patch(ref(128), list(reversed(scene.points)), SyntheticBackend(),
                        image=scene.image)
        assert [x.box for x in a.boxes] == [x.box for x in b.boxes]

    def test_backend_error_aborts_patch(self):
        points = [pt("a", 10, 10), pt("b", 30, 30)]
        backend = FixtureBackend()  # empty: every request fails
        with pytest.raises(BackendError):
            label_patch(ref(), points, backend, image=np.zeros((64, 64), np.uint8))

    def test_empty_resolution_falls_back_to_buffer(self):
        # Two identical masks with the second point much closer to every
        # pixel: the first object keeps nothing and falls back.
        bits = np.zeros((64, 64), dtype=bool)
        bits[30:34, 30:34] = True
        backend = FixtureBackend({
            ("s_0_0", "a"): InstanceMask("a", bits),
            ("s_0_0", "b"): InstanceMask("b", bits),
        })
        points = [pt("a", 5.0, 5.0), pt("b", 32.0, 32.0)]
        result = label_patch(ref(), points, backend, image=np.zeros((64, 64), np.uint8))
        assert result.fallback_ids == ["a"]
        h = 13  # 4 m at 0.3 m/px
        assert result.boxes[0].box == (0.0, 0.0, 5.0 + h, 5.0 + h)
        assert result.boxes[1].box == (30.0, 30.0, 34.0, 34.0)


class TestBufferBaseline:
    def test_whale_box(self):
        boxes = buffer_labels_baseline([pt("w", 50.0, 50.0)], BufferConfig(), 0.3, 320)
        assert boxes[0].box == (37.0, 37.0, 63.0, 63.0)

    def test_close_whales_overlap(self):
        boxes = buffer_labels_baseline(
            [pt("w1", 50.0, 50.0), pt("w2", 53.0, 50.0)], BufferConfig(), 0.3, 320)
        assert box_iou_reference(boxes[0].box, boxes[1].box) > 0.5

    def test_per_class_buffer_sizes(self):
        boxes = buffer_labels_baseline(
            [pt("w", 100.0, 100.0, ClassLabel.CERTAIN_WHALE),
             pt("u", 200.0, 100.0, ClassLabel.UNCERTAIN_WHALE),
             pt("s", 100.0, 200.0, ClassLabel.HARP_SEAL)],
            BufferConfig(), 0.3, 320)
        widths = {b.ann_id: b.box[2] - b.box[0] for b in boxes}
        assert widths["w"] == widths["u"] == 26.0  # 2 * round(4/0.3)
        assert widths["s"] == 14.0  # 2 * round(2/0.3)
