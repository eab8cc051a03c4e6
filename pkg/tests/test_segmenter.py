"""Backend contract tests: fixture playback, synthetic components, and the
external process wire protocol."""
import json
import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from seeker.segmenter import (BackendError, ExternalBackend, FixtureBackend, InstanceMask,
                              SegmentRequest, SyntheticBackend, generate_synthetic_scene)

STUB = Path(__file__).parent / "stub_backend.py"


def request(image, point, box, patch_id="p1", ann_id="a1"):
    return SegmentRequest(patch_id, ann_id, image, point, box)


class TestFixtureBackend:
    def test_playback(self):
        mask = InstanceMask("a1", np.zeros((8, 8), dtype=bool), 0.7)
        backend = FixtureBackend({("p1", "a1"): mask})
        got = backend.segment(request(np.zeros((8, 8), np.uint8), (4, 4), (2, 2, 6, 6)))
        assert got is mask

    def test_unknown_key_is_error(self):
        backend = FixtureBackend()
        with pytest.raises(BackendError, match="patch=p1 ann=a1"):
            backend.segment(request(np.zeros((8, 8), np.uint8), (4, 4), (2, 2, 6, 6)))

    def test_json_roundtrip(self, tmp_path):
        bits = np.zeros((4, 5), dtype=bool)
        bits[1, 1:4] = True
        payload = {"p1": {"a1": {"rle": [6, 3, 11], "width": 5, "height": 4,
                                 "score": 0.25}}}
        path = tmp_path / "fixtures.json"
        path.write_text(json.dumps(payload))
        backend = FixtureBackend.from_json(path)
        got = backend.segment(request(np.zeros((4, 5), np.uint8), (2, 1), (1, 0, 4, 2)))
        assert (got.bits == bits).all()
        assert got.score == 0.25


class TestSyntheticBackend:
    def test_single_ellipse_recovered_exactly(self):
        scene = generate_synthetic_scene(21, 1, 64)
        pt = scene.points[0]
        backend = SyntheticBackend()
        got = backend.segment(request(scene.image, (pt.x, pt.y), (0, 0, 64, 64)))
        assert (got.bits == scene.masks[0]).all()

    def test_touching_objects_merge(self):
        scene = generate_synthetic_scene(22, 2, 64, touch_probability=1.0)
        union = scene.masks[0] | scene.masks[1]
        backend = SyntheticBackend()
        for pt in scene.points:
            got = backend.segment(request(scene.image, (pt.x, pt.y), (0, 0, 64, 64)))
            assert (got.bits == union).all()

    def test_mask_always_contains_prompt_pixel(self):
        scene = generate_synthetic_scene(23, 4, 96)
        backend = SyntheticBackend()
        for x, y in [(3.5, 3.5), (48.0, 48.0), (90.2, 10.7)]:
            got = backend.segment(request(scene.image, (x, y), (0, 0, 96, 96)))
            assert got.bits[int(y), int(x)]

    def test_dims_match_patch(self):
        scene = generate_synthetic_scene(24, 2, 80)
        backend = SyntheticBackend()
        pt = scene.points[0]
        got = backend.segment(request(scene.image, (pt.x, pt.y), (0, 0, 80, 80)))
        assert got.bits.shape == (80, 80)

    def test_point_outside_box_rejected(self):
        scene = generate_synthetic_scene(25, 1, 64)
        backend = SyntheticBackend()
        with pytest.raises(BackendError, match="outside prompt box"):
            backend.segment(request(scene.image, (50, 50), (0, 0, 10, 10)))


class TestSyntheticScene:
    def test_zero_objects(self):
        scene = generate_synthetic_scene(1, 0, 64)
        assert scene.points == []
        assert scene.boxes == []
        assert (scene.image < 128).all()

    def test_single_object_box_is_tight(self):
        scene = generate_synthetic_scene(2, 1, 64)
        ys, xs = np.nonzero(scene.masks[0])
        assert scene.boxes[0].box == (xs.min(), ys.min(), xs.max() + 1, ys.max() + 1)

    def test_deterministic_per_seed(self):
        a = generate_synthetic_scene(3, 20, 320, touch_probability=0.5)
        b = generate_synthetic_scene(3, 20, 320, touch_probability=0.5)
        assert (a.image == b.image).all()
        assert a.points == b.points
        assert a.boxes == b.boxes

    def test_seeds_differ(self):
        a = generate_synthetic_scene(4, 5, 128)
        b = generate_synthetic_scene(5, 5, 128)
        assert not (a.image == b.image).all()

    def test_unplaceable_scene_errors(self):
        with pytest.raises(ValueError, match="cannot place"):
            generate_synthetic_scene(8, 60, 32, max_attempts=40)

    def test_isolated_objects_stay_separate(self):
        scene = generate_synthetic_scene(6, 6, 320, touch_probability=0.0)
        backend = SyntheticBackend()
        for i, pt in enumerate(scene.points):
            got = backend.segment(request(scene.image, (pt.x, pt.y), (0, 0, 320, 320)))
            assert (got.bits == scene.masks[i]).all()

    def test_touching_pair_forms_one_component(self):
        # Touch placement must produce 8-adjacency or direct overlap, so the
        # backend sees a single merged component covering both bodies.
        scene = generate_synthetic_scene(7, 2, 96, touch_probability=1.0)
        backend = SyntheticBackend()
        pt = scene.points[0]
        merged = backend.segment(request(scene.image, (pt.x, pt.y), (0, 0, 96, 96)))
        union = scene.masks[0] | scene.masks[1]
        assert (merged.bits == union).all()


def external(tmp_path, mode, timeout_ms=5000):
    return ExternalBackend([sys.executable, str(STUB), mode], tmp_path, timeout_ms)


@pytest.fixture
def patch_png(tmp_path):
    rng = np.random.default_rng(9)
    Image.fromarray(rng.integers(0, 255, (12, 10), dtype=np.uint8)).save(
        tmp_path / "p1.png")
    return tmp_path


class TestExternalBackend:
    def test_zeros_reply(self, patch_png):
        with external(patch_png, "zeros") as backend:
            mask = backend.segment(request("p1.png", (5, 5), (2, 2, 8, 8)))
        assert mask.bits.shape == (12, 10)
        assert not mask.bits.any()
        assert mask.score == 0.5

    def test_box_reply_decodes(self, patch_png):
        with external(patch_png, "box") as backend:
            mask = backend.segment(request("p1.png", (5, 5), (2, 3, 8, 9)))
        expected = np.zeros((12, 10), dtype=bool)
        expected[3:9, 2:8] = True
        assert (mask.bits == expected).all()
        assert mask.score == 0.9

    def test_rle_mismatch(self, patch_png):
        with external(patch_png, "badsum") as backend:
            with pytest.raises(BackendError, match="rle length mismatch"):
                backend.segment(request("p1.png", (5, 5), (2, 2, 8, 8)))

    def test_malformed_reply(self, patch_png):
        with external(patch_png, "badjson") as backend:
            with pytest.raises(BackendError, match="malformed reply"):
                backend.segment(request("p1.png", (5, 5), (2, 2, 8, 8)))

    def test_process_exit(self, patch_png):
        with external(patch_png, "exit") as backend:
            with pytest.raises(BackendError, match="process"):
                backend.segment(request("p1.png", (5, 5), (2, 2, 8, 8)))

    def test_timeout(self, patch_png):
        with external(patch_png, "slow", timeout_ms=200) as backend:
            with pytest.raises(BackendError, match="no reply within 200 ms"):
                backend.segment(request("p1.png", (5, 5), (2, 2, 8, 8)))

    def test_timeout_env_default(self, patch_png, monkeypatch):
        monkeypatch.setenv("SEEKER_BACKEND_TIMEOUT_MS", "1234")
        backend = ExternalBackend(["true"], patch_png)
        assert backend.timeout_ms == 1234
        monkeypatch.delenv("SEEKER_BACKEND_TIMEOUT_MS")
        backend = ExternalBackend(["true"], patch_png)
        assert backend.timeout_ms == 30000
