"""Review service endpoint and store-concurrency tests."""
import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from seeker.annotations import ClassLabel, LabeledBox, write_yolo_labels
from seeker.raster import PatchRef, write_manifest
from seeker.service import LabelStore, RevisionConflict, create_app


@pytest.fixture
def store(tmp_path):
    images = tmp_path / "patches"
    labels = tmp_path / "labels"
    images.mkdir()
    labels.mkdir()
    refs = []
    rng = np.random.default_rng(3)
    for i in range(3):
        ref = PatchRef(f"sc_{i * 320}_0", "sc", i * 320, 0, 320, 0.3)
        refs.append(ref)
        Image.fromarray(rng.integers(0, 255, (320, 320), dtype=np.uint8)).save(
            images / f"sc_{i * 320}_0.png")
        boxes = [LabeledBox(f"a{i}{j}", ClassLabel(j % 3),
                            (10 + 20 * j, 10, 26 + 20 * j, 26)) for j in range(5)]
        text, ids = write_yolo_labels(boxes, 320)
        (labels / f"{ref.patch_id}.txt").write_text(text)
        (labels / f"{ref.patch_id}.ids").write_text(ids)
    write_manifest(refs, tmp_path / "manifest.csv")
    return LabelStore(tmp_path / "manifest.csv", images, labels)


@pytest.fixture
def client(store):
    return TestClient(create_app(store))


def get_boxes(client, pid):
    return client.get(f"/api/patches/{pid}/labels").json()


class TestEndpoints:
    def test_list_patches(self, client):
        patches = client.get("/api/patches").json()
        assert len(patches) == 3
        assert patches[0] == {"patch_id": "sc_0_0", "n_boxes": 5, "reviewed": False}

    def test_image_bytes(self, client):
        resp = client.get("/api/patches/sc_0_0/image")
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "image/png"
        assert resp.content[:4] == b"\x89PNG"

    def test_unknown_patch_404(self, client):
        assert client.get("/api/patches/nope/labels").status_code == 404
        assert client.get("/api/patches/nope/image").status_code == 404
        assert client.get("/api/patches/nope/grid").status_code == 404

    def test_labels_roundtrip_after_put(self, client):
        before = get_boxes(client, "sc_0_0")
        assert before["revision"] == 0
        boxes = before["boxes"][:-1]  # delete one box
        resp = client.put("/api/patches/sc_0_0/labels",
                          json={"base_revision": 0, "boxes": boxes, "author": "rev1"})
        assert resp.status_code == 200
        assert resp.json()["revision"] == 1
        after = get_boxes(client, "sc_0_0")
        assert after["revision"] == 1
        assert after["boxes"] == boxes

    def test_stale_base_revision_409(self, client):
        boxes = get_boxes(client, "sc_0_0")["boxes"]
        assert client.put("/api/patches/sc_0_0/labels",
                          json={"base_revision": 0, "boxes": boxes}).status_code == 200
        resp = client.put("/api/patches/sc_0_0/labels",
                          json={"base_revision": 0, "boxes": boxes})
        assert resp.status_code == 409

    def test_invalid_box_400(self, client):
        bad = [{"ann_id": "x", "class": 0, "box": [10, 10, 10, 30]}]
        resp = client.put("/api/patches/sc_0_0/labels",
                          json={"base_revision": 0, "boxes": bad})
        assert resp.status_code == 400
        bad = [{"ann_id": "x", "class": 0, "box": [10, 10, 400, 30]}]
        resp = client.put("/api/patches/sc_0_0/labels",
                          json={"base_revision": 0, "boxes": bad})
        assert resp.status_code == 400

    def test_move_one_of_five_boxes_stats(self, client):
        data = get_boxes(client, "sc_0_0")
        boxes = data["boxes"]
        moved = dict(boxes[0])
        moved["box"] = [b + 20 for b in moved["box"][:2]] + \
            [b + 20 for b in moved["box"][2:]]
        client.put("/api/patches/sc_0_0/labels",
                   json={"base_revision": 0, "boxes": [moved] + boxes[1:]})
        stats = client.get("/api/stats/corrections").json()
        cls_name = ["certain_whale", "uncertain_whale", "harp_seal"][boxes[0]["class"]]
        assert stats[cls_name]["moved"] == 1
        assert stats[cls_name]["n_corrected"] == 1
        total_auto = sum(stats[c]["n_auto"] for c in stats)
        assert total_auto == 15

    def test_grid_spacing(self, client):
        grid = client.get("/api/patches/sc_0_0/grid", params={"cell_m": 250}).json()
        assert grid["spacing_px"] == 833
        assert grid["x_lines"] == [0]  # 833 > patch size 320, origin aligned
        grid2 = client.get("/api/patches/sc_320_0/grid", params={"cell_m": 30}).json()
        assert grid2["spacing_px"] == 100
        assert grid2["x_lines"] == [80, 180, 280]  # scene x = 400, 500, 600
        assert grid2["y_lines"] == [0, 100, 200, 300]

    def test_stats_match_fresh_merge(self, client, store):
        boxes = get_boxes(client, "sc_320_0")["boxes"]
        client.put("/api/patches/sc_320_0/labels",
                   json={"base_revision": 0, "boxes": boxes[1:]})
        stats_api = client.get("/api/stats/corrections").json()
        assert stats_api == store.correction_stats().to_dict()


class TestStoreConcurrency:
    def test_exactly_one_concurrent_put_wins(self, store):
        boxes = store.load_labels("sc_0_0", 0).boxes
        results = []
        barrier = threading.Barrier(2)

        def attempt(author):
            barrier.wait()
            try:
                rev = store.save_revision("sc_0_0", 0, boxes, author)
                results.append(("ok", author, rev))
            except RevisionConflict:
                results.append(("conflict", author, None))

        threads = [threading.Thread(target=attempt, args=(f"w{i}",)) for i in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        outcomes = sorted(r[0] for r in results)
        assert outcomes == ["conflict", "ok"]
        assert store.latest_revision("sc_0_0") == 1

    def test_revision_strictly_increases(self, store):
        boxes = store.load_labels("sc_0_0", 0).boxes
        assert store.save_revision("sc_0_0", 0, boxes) == 1
        assert store.save_revision("sc_0_0", 1, boxes) == 2
        assert store.save_revision("sc_0_0", 2, boxes) == 3
        assert store.latest_revision("sc_0_0") == 3

    def test_writes_to_other_patches_independent(self, store):
        boxes = store.load_labels("sc_0_0", 0).boxes
        store.save_revision("sc_0_0", 0, boxes)
        assert store.latest_revision("sc_320_0") == 0
